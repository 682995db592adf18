/**
 * @file metrics.h
 * @brief Objective evaluation: note-on density over time windows, pitch
 *        distribution, and the density stability summary.
 */
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "midi/midi_file.h"

namespace quartet {

/// Note-on counts per consecutive half-open window [k*w, (k+1)*w), anchored
/// at t = 0 and tiling [0, score duration).
struct DensityProfile {
  double window_seconds = 5.0;
  std::vector<int64_t> counts;

  double coveredSeconds() const { return window_seconds * static_cast<double>(counts.size()); }
};

DensityProfile noteDensity(const MidiScore& score, double window_seconds);

struct PitchHistogram {
  std::array<int64_t, 128> counts{};   // raw onset counts over all pitches
  std::array<double, 128> frequency{}; // normalized within [low, high]
  int low = 0;
  int high = 127;
  int64_t total_in_range = 0;
};

/// Onset counts over a corpus, with frequencies renormalized within the
/// requested pitch range.
PitchHistogram pitchDistribution(std::span<const MidiScore> scores, int low_pitch,
                                 int high_pitch);

struct DensityStability {
  double leading_mean = 0.0;   // mean density over the first quarter
  double trailing_mean = 0.0;  // mean density over the last quarter
  double ratio = 0.0;          // trailing / leading
};

/// Compares note density at the start and end of the horizon: the mean count
/// over the first and last quarters of [0, horizon) and their ratio. The
/// profile must cover the horizon.
DensityStability densityStability(const DensityProfile& profile, double horizon_seconds);

std::string densityCsv(const DensityProfile& profile);
std::string pitchCsv(const PitchHistogram& histogram);

}  // namespace quartet

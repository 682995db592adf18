/**
 * @file codec.h
 * @brief Conversion between timed notes and the tempo-normalized 4-tuple
 *        integer representation.
 *
 * Durations are expressed as note values (fractions of a whole note), which
 * makes the token streams independent of the tempo the piece is played at.
 * One codec tick is 1/384 of a whole note by default; 384 = 128 x 3 keeps
 * triplets exact.
 */
#pragma once

#include <cstdint>

#include "codec/token_streams.h"
#include "midi/midi_file.h"

namespace quartet {

struct CodecConfig {
  int ticks_per_whole = 384;
  int max_ticks = 3840;
  double default_tempo_bpm = 120.0;  // tempo assumed when decoding
  int decode_ticks_per_quarter = 480;

  void validate() const;
};

/// Clamp/extremum bookkeeping produced while encoding, reported per corpus.
struct EncodeStats {
  int64_t notes = 0;
  int32_t max_on2on = 0;
  int32_t max_on2off = 0;
  int64_t on2on_clamped = 0;
  int64_t on2off_clamped = 0;

  void merge(const EncodeStats& other) {
    notes += other.notes;
    max_on2on = std::max(max_on2on, other.max_on2on);
    max_on2off = std::max(max_on2off, other.max_on2off);
    on2on_clamped += other.on2on_clamped;
    on2off_clamped += other.on2off_clamped;
  }
};

/// Duration in whole-note units at a constant tempo:
/// duration * tempo / 240.
double noteValue(double duration_seconds, double tempo_bpm);

/// Whole-note units elapsed between t0 and t1 under a piecewise-constant
/// tempo map; reduces to noteValue(t1 - t0, tempo) when tempo is constant
/// over the interval.
double beatsBetween(double t0, double t1, const TempoMap& tempo_map);

/// Projects a sorted score into token streams. on2on[0] is 0; for i > 0,
/// on2on[i] is the rounded tick count between onsets i-1 and i, clamped to
/// [0, max_ticks]. on2off is each note's own duration in ticks, clamped to
/// [1, max_ticks]. Rounding is half-away-from-zero.
TokenStreams encode(const MidiScore& score, const CodecConfig& config,
                    EncodeStats* stats = nullptr);

/// Inverse projection at the configured decode tempo; the result has a
/// constant tempo map.
MidiScore decode(const TokenStreams& streams, const CodecConfig& config);

}  // namespace quartet

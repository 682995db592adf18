#include "eval/metrics.h"

#include <cmath>
#include <sstream>

namespace quartet {

DensityProfile noteDensity(const MidiScore& score, double window_seconds) {
  if (window_seconds <= 0.0) throw DataError("density window must be positive");
  DensityProfile profile;
  profile.window_seconds = window_seconds;
  const double duration = score.duration();
  if (duration <= 0.0) return profile;
  const auto n_windows = static_cast<size_t>(std::ceil(duration / window_seconds));
  profile.counts.assign(n_windows, 0);
  for (const auto& note : score.notes) {
    auto window = static_cast<size_t>(note.onset / window_seconds);
    if (window >= n_windows) window = n_windows - 1;  // onset == duration edge
    ++profile.counts[window];
  }
  return profile;
}

PitchHistogram pitchDistribution(std::span<const MidiScore> scores, int low_pitch,
                                 int high_pitch) {
  if (low_pitch < 0 || high_pitch > 127 || low_pitch > high_pitch) {
    throw DataError("invalid pitch range");
  }
  PitchHistogram histogram;
  histogram.low = low_pitch;
  histogram.high = high_pitch;
  for (const auto& score : scores) {
    for (const auto& note : score.notes) ++histogram.counts[note.pitch];
  }
  for (int p = low_pitch; p <= high_pitch; ++p) {
    histogram.total_in_range += histogram.counts[static_cast<size_t>(p)];
  }
  if (histogram.total_in_range > 0) {
    for (int p = low_pitch; p <= high_pitch; ++p) {
      histogram.frequency[static_cast<size_t>(p)] =
          static_cast<double>(histogram.counts[static_cast<size_t>(p)]) /
          static_cast<double>(histogram.total_in_range);
    }
  }
  return histogram;
}

DensityStability densityStability(const DensityProfile& profile, double horizon_seconds) {
  if (horizon_seconds <= 0.0) throw DataError("horizon must be positive");
  if (profile.coveredSeconds() + 1e-9 < horizon_seconds) {
    throw DataError("density profile covers " + std::to_string(profile.coveredSeconds()) +
                    " s, shorter than the " + std::to_string(horizon_seconds) + " s horizon");
  }
  const auto horizon_windows =
      static_cast<size_t>(std::floor(horizon_seconds / profile.window_seconds + 1e-9));
  const size_t quarter = std::max<size_t>(1, horizon_windows / 4);
  DensityStability stability;
  for (size_t i = 0; i < quarter; ++i) {
    stability.leading_mean += static_cast<double>(profile.counts[i]);
    stability.trailing_mean += static_cast<double>(profile.counts[horizon_windows - quarter + i]);
  }
  stability.leading_mean /= static_cast<double>(quarter);
  stability.trailing_mean /= static_cast<double>(quarter);
  if (stability.leading_mean > 0.0) {
    stability.ratio = stability.trailing_mean / stability.leading_mean;
  } else {
    stability.ratio = stability.trailing_mean > 0.0
                          ? std::numeric_limits<double>::infinity()
                          : 1.0;
  }
  return stability;
}

std::string densityCsv(const DensityProfile& profile) {
  std::ostringstream out;
  out << "window_index,t_start_seconds,count\n";
  for (size_t i = 0; i < profile.counts.size(); ++i) {
    out << i << "," << static_cast<double>(i) * profile.window_seconds << ","
        << profile.counts[i] << "\n";
  }
  return out.str();
}

std::string pitchCsv(const PitchHistogram& histogram) {
  std::ostringstream out;
  out << "pitch,frequency\n";
  out.precision(12);
  for (int p = histogram.low; p <= histogram.high; ++p) {
    out << p << "," << histogram.frequency[static_cast<size_t>(p)] << "\n";
  }
  return out.str();
}

}  // namespace quartet

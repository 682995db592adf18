#pragma once

#include <string>
#include <vector>

#include "eval/metrics.h"

namespace quartet {

struct DensitySeries {
  std::string label;
  DensityProfile profile;
};

/// Line chart of note density over time, one polyline per labeled series.
std::string densityComparisonSvg(const std::vector<DensitySeries>& series);

/// Bar chart of a pitch histogram's in-range frequencies.
std::string pitchHistogramSvg(const PitchHistogram& histogram);

}  // namespace quartet

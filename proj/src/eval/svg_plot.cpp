#include "eval/svg_plot.h"

#include <algorithm>
#include <sstream>

namespace quartet {

namespace {

constexpr int kWidth = 880;
constexpr int kHeight = 360;
constexpr int kMarginLeft = 56;
constexpr int kMarginBottom = 36;
constexpr int kMarginTop = 20;
constexpr int kMarginRight = 16;

const char* kPalette[] = {"#1f6fb2", "#d1495b", "#3e8e5a", "#a06cd5", "#c88a2e", "#4a4a4a"};

void openSvg(std::ostringstream& out) {
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
      << "' viewBox='0 0 " << kWidth << " " << kHeight << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n";
}

void axes(std::ostringstream& out, const std::string& x_label, const std::string& y_label) {
  const int x0 = kMarginLeft, y0 = kHeight - kMarginBottom;
  out << "<line x1='" << x0 << "' y1='" << kMarginTop << "' x2='" << x0 << "' y2='" << y0
      << "' stroke='black'/>\n"
      << "<line x1='" << x0 << "' y1='" << y0 << "' x2='" << kWidth - kMarginRight << "' y2='"
      << y0 << "' stroke='black'/>\n"
      << "<text x='" << (kWidth / 2) << "' y='" << (kHeight - 8)
      << "' font-size='13' text-anchor='middle'>" << x_label << "</text>\n"
      << "<text x='14' y='" << (kHeight / 2)
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 14 " << (kHeight / 2)
      << ")'>" << y_label << "</text>\n";
}

}  // namespace

std::string densityComparisonSvg(const std::vector<DensitySeries>& series) {
  std::ostringstream out;
  openSvg(out);
  axes(out, "time (s)", "note-ons per window");

  double max_t = 1.0, max_count = 1.0;
  for (const auto& s : series) {
    max_t = std::max(max_t, s.profile.coveredSeconds());
    for (int64_t c : s.profile.counts) max_count = std::max(max_count, static_cast<double>(c));
  }
  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto x_at = [&](double t) { return kMarginLeft + t / max_t * plot_w; };
  auto y_at = [&](double c) { return kHeight - kMarginBottom - c / max_count * plot_h; };

  for (size_t i = 0; i < series.size(); ++i) {
    const auto& profile = series[i].profile;
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.6' points='";
    for (size_t w = 0; w < profile.counts.size(); ++w) {
      const double t = (static_cast<double>(w) + 0.5) * profile.window_seconds;
      out << x_at(t) << "," << y_at(static_cast<double>(profile.counts[w])) << " ";
    }
    out << "'/>\n";
    out << "<text x='" << (kMarginLeft + 10) << "' y='" << (kMarginTop + 16 + 16 * i)
        << "' font-size='12' fill='" << color << "'>" << series[i].label << "</text>\n";
  }
  out << "<text x='" << (kMarginLeft + 4) << "' y='" << (kMarginTop - 6) << "' font-size='11'>"
      << "max " << max_count << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string pitchHistogramSvg(const PitchHistogram& histogram) {
  std::ostringstream out;
  openSvg(out);
  axes(out, "pitch", "frequency");

  const int n = histogram.high - histogram.low + 1;
  double max_f = 1e-12;
  for (int p = histogram.low; p <= histogram.high; ++p) {
    max_f = std::max(max_f, histogram.frequency[static_cast<size_t>(p)]);
  }
  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const double bar_w = plot_w / n;
  for (int p = histogram.low; p <= histogram.high; ++p) {
    const double f = histogram.frequency[static_cast<size_t>(p)];
    const double h = f / max_f * plot_h;
    const double x = kMarginLeft + (p - histogram.low) * bar_w;
    out << "<rect x='" << x + 1 << "' y='" << (kHeight - kMarginBottom - h) << "' width='"
        << bar_w - 2 << "' height='" << h << "' fill='#1f6fb2'/>\n";
    if (n <= 24) {
      out << "<text x='" << (x + bar_w / 2) << "' y='" << (kHeight - kMarginBottom + 14)
          << "' font-size='10' text-anchor='middle'>" << p << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace quartet

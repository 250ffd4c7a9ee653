#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace mortpca::plot {

/// One x position of a band chart.
struct BandPoint {
  std::string label;  // x tick text
  double observed = std::numeric_limits<double>::quiet_NaN();
  double median = 0.0;
  double lo_outer = 0.0, hi_outer = 0.0;
  double lo_inner = 0.0, hi_inner = 0.0;  // NaN to omit the inner band
  bool flagged = false;
};

struct BandChart {
  std::string title;
  std::string y_label;
  std::string outer_name = "95% PI";
  std::string inner_name = "75% PI";
  std::vector<BandPoint> points;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

/// Static SVG: shaded outer and inner bands, median line, observed dots;
/// flagged observations are drawn larger in red.
inline void write_band_svg(const BandChart& chart, std::ostream& out) {
  using detail::num;
  const double width = 900, height = 420;
  const double left = 80, right = 150, top = 40, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;
  const auto& pts = chart.points;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : pts) {
    for (double v : {p.observed, p.lo_outer, p.hi_outer, p.median}) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    lo -= 0.5 * std::max(1.0, std::abs(lo));
    hi += 0.5 * std::max(1.0, std::abs(hi));
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const std::size_t n = pts.size();
  auto x = [&](std::size_t i) {
    return left + (n <= 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1));
  };
  auto y = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"16\">" << detail::escape(chart.title) << "</text>\n";

  auto band = [&](auto lower, auto upper, const char* fill) {
    if (n == 0) return;
    out << "<polygon fill=\"" << fill << "\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < n; ++i) out << num(x(i)) << ',' << num(y(upper(pts[i]))) << ' ';
    for (std::size_t i = n; i-- > 0;) out << num(x(i)) << ',' << num(y(lower(pts[i]))) << ' ';
    out << "\"/>\n";
  };
  band([](const BandPoint& p) { return p.lo_outer; },
       [](const BandPoint& p) { return p.hi_outer; }, "#c6dbef");
  const bool inner = n > 0 && std::isfinite(pts.front().lo_inner);
  if (inner) {
    band([](const BandPoint& p) { return p.lo_inner; },
         [](const BandPoint& p) { return p.hi_inner; }, "#6baed6");
  }
  if (n > 0) {
    out << "<polyline fill=\"none\" stroke=\"#08306b\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) out << num(x(i)) << ',' << num(y(pts[i].median)) << ' ';
    out << "\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(pts[i].observed)) continue;
    out << "<circle cx=\"" << num(x(i)) << "\" cy=\"" << num(y(pts[i].observed)) << "\" r=\""
        << (pts[i].flagged ? 5 : 3) << "\" fill=\"" << (pts[i].flagged ? "#cb181d" : "black")
        << "\"" << (pts[i].flagged ? " class=\"flagged\"" : "") << "/>\n";
  }

  // Axes and ticks.
  out << "<g font-family=\"sans-serif\" font-size=\"11\" stroke=\"black\">\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = lo + (hi - lo) * k / 5.0;
    out << "<text stroke=\"none\" x=\"" << left - 6 << "\" y=\"" << num(y(v) + 4)
        << "\" text-anchor=\"end\">" << detail::tick(v) << "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, n / 8);
  for (std::size_t i = 0; i < n; i += step) {
    out << "<text stroke=\"none\" x=\"" << num(x(i)) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << detail::escape(pts[i].label) << "</text>\n";
  }
  out << "<text stroke=\"none\" transform=\"translate(18," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape(chart.y_label)
      << "</text>\n</g>\n";

  // Legend.
  const double lx = left + pw + 15;
  out << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect x=\"" << lx << "\" y=\"" << top << "\" width=\"14\" height=\"10\" fill=\"#c6dbef\"/>"
      << "<text x=\"" << lx + 20 << "\" y=\"" << top + 9 << "\">" << detail::escape(chart.outer_name)
      << "</text>\n";
  if (inner) {
    out << "<rect x=\"" << lx << "\" y=\"" << top + 18 << "\" width=\"14\" height=\"10\" fill=\"#6baed6\"/>"
        << "<text x=\"" << lx + 20 << "\" y=\"" << top + 27 << "\">"
        << detail::escape(chart.inner_name) << "</text>\n";
  }
  out << "<line x1=\"" << lx << "\" y1=\"" << top + 41 << "\" x2=\"" << lx + 14 << "\" y2=\""
      << top + 41 << "\" stroke=\"#08306b\" stroke-width=\"2\"/>"
      << "<text x=\"" << lx + 20 << "\" y=\"" << top + 45 << "\">median</text>\n"
      << "<circle cx=\"" << lx + 7 << "\" cy=\"" << top + 59 << "\" r=\"3\" fill=\"black\"/>"
      << "<text x=\"" << lx + 20 << "\" y=\"" << top + 63 << "\">observed</text>\n"
      << "<circle cx=\"" << lx + 7 << "\" cy=\"" << top + 77 << "\" r=\"5\" fill=\"#cb181d\"/>"
      << "<text x=\"" << lx + 20 << "\" y=\"" << top + 81 << "\">flagged</text>\n</g>\n";
  out << "</svg>\n";
}

}  // namespace mortpca::plot

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dhpr/format.hpp"
#include "dhpr/trace.hpp"

namespace dhpr {

struct PlotSeries {
  std::string label;
  std::vector<double> x;  // iteration numbers
  std::vector<double> y;  // metric values, plotted on a log10 axis
};

/// Pulls one named column out of a trace. Rows whose value is missing or
/// non-finite are dropped (they cannot sit on a log axis anyway).
inline PlotSeries trace_series(const Trace& tr, const std::string& column,
                               const std::string& label) {
  PlotSeries s;
  s.label = label;
  const auto push = [&](long long it, double v) {
    if (std::isfinite(v)) {
      s.x.push_back(static_cast<double>(it));
      s.y.push_back(v);
    }
  };
  for (const auto& r : tr.rows) {
    if (column == "eta_re") push(r.iter, r.eta_re);
    else if (column == "eta_kkt") push(r.iter, r.eta_kkt);
    else if (column == "kkt_norm") push(r.iter, r.kkt_norm);
    else if (column == "dual_gap") { if (r.dual_gap) push(r.iter, *r.dual_gap); }
    else if (column == "sigma") push(r.iter, r.sigma);
    else if (column == "wall_ms") push(r.iter, r.wall_ms);
    else
      throw std::invalid_argument("plot: no metric column named '" + column + "'");
  }
  if (tr.rows.empty())
    throw std::invalid_argument("plot: trace '" + label + "' has no rows");
  return s;
}

inline PlotSeries load_trace_series(const std::string& csv_path,
                                    const std::string& column) {
  return trace_series(read_trace_csv(csv_path), column,
                      std::filesystem::path(csv_path).stem().string());
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// Line chart of log10(metric) against iteration: one polyline per series,
/// decade gridlines, markers every max(1, n/50) points, legend from the
/// series labels. Values <= 0 are dropped. The data is drawn as-is.
inline std::string render_log_plot(const std::vector<PlotSeries>& series,
                                   const std::string& y_label) {
  if (series.empty()) throw std::invalid_argument("plot: no series given");

  double x_max = 1.0, y_min = std::numeric_limits<double>::infinity(), y_max = 0.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (s.y[i] <= 0.0) continue;
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (!(y_min <= y_max))
    throw std::invalid_argument("plot: no positive values to place on a log axis");

  int dec_lo = static_cast<int>(std::floor(std::log10(y_min)));
  int dec_hi = static_cast<int>(std::ceil(std::log10(y_max)));
  if (dec_hi == dec_lo) ++dec_hi;

  const double width = 760.0, height = 480.0;
  const double ml = 86.0, mr = 200.0, mt = 24.0, mb = 56.0;
  const double pw = width - ml - mr, ph = height - mt - mb;
  const auto sx = [&](double x) { return ml + pw * (x / x_max); };
  const auto sy = [&](double y) {
    return mt + ph * (dec_hi - std::log10(y)) / (dec_hi - dec_lo);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         detail::svg_num(width) + "\" height=\"" + detail::svg_num(height) +
         "\" viewBox=\"0 0 " + detail::svg_num(width) + " " +
         detail::svg_num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // decade gridlines and y tick labels
  const int dec_step = std::max(1, (dec_hi - dec_lo) / 12);
  for (int d = dec_lo; d <= dec_hi; d += dec_step) {
    const double yy = sy(std::pow(10.0, d));
    svg += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(yy) +
           "\" x2=\"" + detail::svg_num(ml + pw) + "\" y2=\"" + detail::svg_num(yy) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + detail::svg_num(ml - 8) + "\" y=\"" +
           detail::svg_num(yy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">1e" +
           std::to_string(d) + "</text>\n";
  }

  // x ticks at round fractions of the range
  for (int t = 0; t <= 5; ++t) {
    const double xv = x_max * t / 5.0;
    const double xx = sx(xv);
    svg += "<line x1=\"" + detail::svg_num(xx) + "\" y1=\"" +
           detail::svg_num(mt + ph) + "\" x2=\"" + detail::svg_num(xx) + "\" y2=\"" +
           detail::svg_num(mt + ph + 5) + "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    char lab[32];
    std::snprintf(lab, sizeof lab, "%.0f", xv);
    svg += "<text x=\"" + detail::svg_num(xx) + "\" y=\"" +
           detail::svg_num(mt + ph + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           lab + "</text>\n";
  }

  // frame and axis labels
  svg += "<rect x=\"" + detail::svg_num(ml) + "\" y=\"" + detail::svg_num(mt) +
         "\" width=\"" + detail::svg_num(pw) + "\" height=\"" + detail::svg_num(ph) +
         "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + detail::svg_num(ml + pw / 2) + "\" y=\"" +
         detail::svg_num(height - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
         "iteration</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::svg_num(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 " + detail::svg_num(mt + ph / 2) + ")\">" +
         detail::svg_escape(y_label) + "</text>\n";

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#17becf"};
  static const char* kDashes[] = {"", "7,3", "2,2", "9,3,2,3"};
  const std::size_t nc = sizeof kColors / sizeof *kColors;
  const std::size_t nd = sizeof kDashes / sizeof *kDashes;

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % nc];
    const char* dash = kDashes[(si / nc) % nd];
    std::string pts;
    std::vector<std::pair<double, double>> drawn;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (s.y[i] <= 0.0) continue;
      const double xx = sx(s.x[i]), yy = sy(s.y[i]);
      pts += detail::svg_num(xx) + "," + detail::svg_num(yy) + " ";
      drawn.emplace_back(xx, yy);
    }
    if (drawn.empty()) continue;
    svg += "<polyline points=\"" + pts +
           "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.6\"";
    if (*dash) svg += std::string(" stroke-dasharray=\"") + dash + "\"";
    svg += "/>\n";
    const std::size_t stride = std::max<std::size_t>(1, drawn.size() / 50);
    for (std::size_t i = 0; i < drawn.size(); i += stride)
      svg += "<circle cx=\"" + detail::svg_num(drawn[i].first) + "\" cy=\"" +
             detail::svg_num(drawn[i].second) + "\" r=\"2.5\" fill=\"" + color +
             "\"/>\n";

    // legend row
    const double ly = mt + 14 + 20.0 * static_cast<double>(si);
    svg += "<line x1=\"" + detail::svg_num(ml + pw + 12) + "\" y1=\"" +
           detail::svg_num(ly) + "\" x2=\"" + detail::svg_num(ml + pw + 44) +
           "\" y2=\"" + detail::svg_num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.6\"";
    if (*dash) svg += std::string(" stroke-dasharray=\"") + dash + "\"";
    svg += "/>\n";
    svg += "<text x=\"" + detail::svg_num(ml + pw + 50) + "\" y=\"" +
           detail::svg_num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::svg_escape(s.label) + "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

inline void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_svg: cannot write " + path);
  f << svg;
}

}  // namespace dhpr

#pragma once

// Static SVG rendering for sweep curves and attention heatmaps. Output is a
// pure function of the input values (fixed-precision numbers, no timestamps).

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "exbert/tensor.hpp"

namespace exbert::plot {

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

}  // namespace detail

inline std::string line_plot_svg(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& title,
                                 const std::string& x_label, const std::string& y_label) {
  using detail::num;
  const double width = 480, height = 320, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  double xmin = xs.empty() ? 0 : *std::min_element(xs.begin(), xs.end());
  double xmax = xs.empty() ? 1 : *std::max_element(xs.begin(), xs.end());
  if (xmax == xmin) xmax = xmin + 1;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - y) * ph; };  // y in [0, 1]

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + detail::escape(title) +
       "</text>\n";
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
       num(top + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double y = i / 4.0;
    s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\" font-size=\"10\">" +
         num(y) + "</text>\n";
  }
  for (double x : xs) {
    s += "<text x=\"" + num(px(x)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
         num(x) + "</text>\n";
  }
  s += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 10) + "\" text-anchor=\"middle\" font-size=\"12\">" +
       detail::escape(x_label) + "</text>\n";
  s += "<text x=\"14\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
       num(top + ph / 2) + ")\">" + detail::escape(y_label) + "</text>\n";
  std::string points;
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    if (i) points += ' ';
    points += num(px(xs[i])) + "," + num(py(ys[i]));
  }
  s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    s += "<circle cx=\"" + num(px(xs[i])) + "\" cy=\"" + num(py(ys[i])) + "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Rows are labelled on the left, columns along the bottom. Cell shade is the
/// weight scaled by the matrix maximum.
inline std::string heatmap_svg(const MatrixD& weights, const std::vector<std::string>& row_labels,
                               const std::vector<std::string>& col_labels, const std::string& title) {
  using detail::num;
  const double cell = 28, left = 220, top = 40, bottom = 90;
  const double width = left + cell * static_cast<double>(weights.cols()) + 20;
  const double height = top + cell * static_cast<double>(weights.rows()) + bottom;
  const double peak = weights.size() ? std::max(weights.maxCoeff(), 1e-12) : 1.0;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + detail::escape(title) +
       "</text>\n";
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    double y = top + cell * static_cast<double>(r);
    if (static_cast<std::size_t>(r) < row_labels.size()) {
      s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(y + cell * 0.65) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::escape(row_labels[static_cast<std::size_t>(r)]) +
           "</text>\n";
    }
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      int shade = static_cast<int>(255.0 - 255.0 * std::clamp(weights(r, c) / peak, 0.0, 1.0));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
      s += "<rect x=\"" + num(left + cell * static_cast<double>(c)) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) +
           "\" height=\"" + num(cell) + "\" fill=\"" + fill + "\"><title>" + num(weights(r, c)) + "</title></rect>\n";
    }
  }
  double label_y = top + cell * static_cast<double>(weights.rows()) + 8;
  for (Eigen::Index c = 0; c < weights.cols() && static_cast<std::size_t>(c) < col_labels.size(); ++c) {
    double x = left + cell * static_cast<double>(c) + cell / 2;
    s += "<text x=\"" + num(x) + "\" y=\"" + num(label_y) + "\" font-size=\"11\" transform=\"rotate(60 " + num(x) +
         " " + num(label_y) + ")\">" + detail::escape(col_labels[static_cast<std::size_t>(c)]) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace exbert::plot

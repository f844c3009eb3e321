#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lanesim/common.hpp"

namespace lanesim {

// Static SVG chart emission for the report figures. Deliberately small: axes,
// ticks, bars, polylines and scatter points are all the report needs.

struct SvgSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<std::pair<double, double>> points;
  bool line = true;    // draw a polyline through the points
  bool marks = true;   // draw point markers
};

class SvgChart {
 public:
  SvgChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add_series(SvgSeries s) { series_.push_back(std::move(s)); }

  void add_bars(const std::vector<std::pair<double, double>>& bars, const std::string& color) {
    bars_ = bars;
    bar_color_ = color;
  }

  std::string render() const {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    auto grow = [&](double x, double y) {
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    };
    for (const auto& s : series_)
      for (const auto& [x, y] : s.points) grow(x, y);
    for (const auto& [x, y] : bars_) {
      grow(x, y);
      grow(x, 0.0);
    }
    if (!any) grow(0.0, 0.0);
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double x_pad = 0.05 * (xmax - xmin);
    const double y_pad = 0.08 * (ymax - ymin);
    xmin -= x_pad;
    xmax += x_pad;
    ymin -= y_pad;
    ymax += y_pad;

    const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 55;
    auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << title_ << "</text>\n";

    // axes + ticks
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = xmin + (xmax - xmin) * i / 5.0;
      const double fy = ymin + (ymax - ymin) * i / 5.0;
      out << "<line x1=\"" << sx(fx) << "\" y1=\"" << H - B << "\" x2=\"" << sx(fx) << "\" y2=\""
          << H - B + 5 << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << sx(fx) << "\" y=\"" << H - B + 18
          << "\" text-anchor=\"middle\" font-size=\"11\">" << strfmt("%.3g", fx) << "</text>\n";
      out << "<line x1=\"" << L - 5 << "\" y1=\"" << sy(fy) << "\" x2=\"" << L << "\" y2=\""
          << sy(fy) << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << L - 8 << "\" y=\"" << sy(fy) + 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << strfmt("%.3g", fy) << "</text>\n";
    }
    out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label_ << "</text>\n";
    out << "<text x=\"16\" y=\"" << (T + H - B) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
        << (T + H - B) / 2 << ")\">" << y_label_ << "</text>\n";

    if (ymin < 0.0 && ymax > 0.0)
      out << "<line x1=\"" << L << "\" y1=\"" << sy(0) << "\" x2=\"" << W - R << "\" y2=\""
          << sy(0) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";

    if (!bars_.empty()) {
      const double bw = (W - L - R) / (static_cast<double>(bars_.size()) * 1.8);
      for (const auto& [x, y] : bars_) {
        const double x0 = sx(x) - bw / 2;
        const double y0 = std::min(sy(0.0), sy(y));
        const double h = std::abs(sy(y) - sy(0.0));
        out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << bw << "\" height=\"" << h
            << "\" fill=\"" << bar_color_ << "\"/>\n";
      }
    }

    double legend_y = T + 6;
    for (const auto& s : series_) {
      if (s.line && s.points.size() > 1) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\" points=\"";
        for (const auto& [x, y] : s.points) out << sx(x) << "," << sy(y) << " ";
        out << "\"/>\n";
      }
      if (s.marks) {
        for (const auto& [x, y] : s.points)
          out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"2.6\" fill=\""
              << s.color << "\"/>\n";
      }
      if (!s.label.empty()) {
        out << "<rect x=\"" << W - R - 150 << "\" y=\"" << legend_y - 9
            << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
        out << "<text x=\"" << W - R - 136 << "\" y=\"" << legend_y
            << "\" font-size=\"11\">" << s.label << "</text>\n";
        legend_y += 16;
      }
    }
    out << "</svg>\n";
    return out.str();
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << render();
  }

 private:
  std::string title_, x_label_, y_label_;
  std::vector<SvgSeries> series_;
  std::vector<std::pair<double, double>> bars_;
  std::string bar_color_ = "#1f77b4";
};

}  // namespace lanesim

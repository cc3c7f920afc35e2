#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "csil2o/errors.hpp"

namespace csil2o {

/// Fixed, locale-independent formatting so repeated runs emit identical
/// bytes.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

/// CSV table with a header row. Cells are written verbatim.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header)
      : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row) {
    if (row.size() != header_.size())
      throw contract_error("CsvWriter: row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::string str() const {
    std::string out = join(header_);
    for (const auto& row : rows_) out += join(row);
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open for writing: " + path);
    os << str();
    if (!os) throw format_error("write failed: " + path);
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Minimal SVG line chart: one or more polylines over a shared axis box.
class SvgChart {
 public:
  SvgChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)),
        x_label_(std::move(x_label)),
        y_label_(std::move(y_label)) {}

  void add_series(std::string name, std::vector<double> xs,
                  std::vector<double> ys) {
    if (xs.size() != ys.size())
      throw contract_error("SvgChart: series length mismatch");
    series_.push_back({std::move(name), std::move(xs), std::move(ys)});
  }

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open for writing: " + path);
    os << render();
    if (!os) throw format_error("write failed: " + path);
  }

  std::string render() const {
    const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (first) {
          xmin = xmax = s.xs[i];
          ymin = ymax = s.ys[i];
          first = false;
        }
        xmin = std::min(xmin, s.xs[i]);
        xmax = std::max(xmax, s.xs[i]);
        ymin = std::min(ymin, s.ys[i]);
        ymax = std::max(ymax, s.ys[i]);
      }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) {
      return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    };
    auto py = [&](double y) {
      return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
    };

    static const char* kColors[] = {"#1f6fb2", "#c23b22", "#2e8540",
                                    "#8a5fbf", "#b8860b", "#444444"};
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
           "height=\"420\" viewBox=\"0 0 640 420\">\n";
    svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" + title_ + "</text>\n";
    svg += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(h - mb) +
           "\" x2=\"" + format_double(w - mr) + "\" y2=\"" + format_double(h - mb) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(mt) +
           "\" x2=\"" + format_double(ml) + "\" y2=\"" + format_double(h - mb) +
           "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double xv = xmin + (xmax - xmin) * k / 4.0;
      const double yv = ymin + (ymax - ymin) * k / 4.0;
      svg += "<text x=\"" + format_double(px(xv)) + "\" y=\"" +
             format_double(h - mb + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"11\">" + format_double(xv) + "</text>\n";
      svg += "<text x=\"" + format_double(ml - 8) + "\" y=\"" +
             format_double(py(yv) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"11\">" + format_double(yv) + "</text>\n";
    }
    svg += "<text x=\"320\" y=\"" + format_double(h - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\">" + x_label_ + "</text>\n";
    svg += "<text x=\"16\" y=\"210\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 16 210)\">" + y_label_ + "</text>\n";
    for (std::size_t si = 0; si < series_.size(); ++si) {
      const auto& s = series_[si];
      std::string pts;
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (i) pts += ' ';
        pts += format_double(px(s.xs[i])) + "," + format_double(py(s.ys[i]));
      }
      svg += "<polyline fill=\"none\" stroke=\"" +
             std::string(kColors[si % 6]) + "\" stroke-width=\"1.5\" points=\"" +
             pts + "\"/>\n";
      svg += "<text x=\"" + format_double(w - mr - 4) + "\" y=\"" +
             format_double(mt + 16.0 * static_cast<double>(si + 1)) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"12\" fill=\"" + kColors[si % 6] + "\">" + s.name +
             "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
  }

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
};

}  // namespace csil2o

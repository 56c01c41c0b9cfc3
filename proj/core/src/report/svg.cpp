#include "ulrn/report/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ulrn/errors.hpp"

namespace ulrn::report {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 80, kRight = 180, kTop = 60, kBottom = 60;
constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double pad = std::max(std::abs(lo) * 0.05, 0.5);
    lo -= pad;
    hi += pad;
  }
}

std::string header(const std::string& provenance, const std::string& title,
                   const std::vector<std::string>& notes) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- " + xml_escape(provenance) +
                  " -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
                  "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " +
                  num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kLeft) + "\" y=\"22\" font-size=\"15\">" + xml_escape(title) + "</text>\n";
  for (std::size_t i = 0; i < notes.size(); ++i) {
    s += "<text x=\"" + num(kLeft) + "\" y=\"" + num(38 + 13.0 * static_cast<double>(i)) +
         "\" font-size=\"10\" fill=\"#555\">" + xml_escape(notes[i]) + "</text>\n";
  }
  return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label) {
  std::string s;
  const double bx = f.px(f.x0), by = f.py(f.y0), tx = f.px(f.x1), ty = f.py(f.y1);
  s += "<path d=\"M" + num(bx) + " " + num(ty) + " L" + num(bx) + " " + num(by) + " L" + num(tx) +
       " " + num(by) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double xv = f.x0 + t * (f.x1 - f.x0), yv = f.y0 + t * (f.y1 - f.y0);
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(by + 16) + "\" text-anchor=\"middle\">" +
         tick(xv) + "</text>\n";
    s += "<text x=\"" + num(bx - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" +
         tick(yv) + "</text>\n";
  }
  s += "<text x=\"" + num((bx + tx) / 2) + "\" y=\"" + num(kHeight - 18) +
       "\" text-anchor=\"middle\">" + xml_escape(x_label) + "</text>\n";
  s += "<text transform=\"translate(18 " + num((by + ty) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + xml_escape(y_label) + "</text>\n";
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 16.0 * static_cast<double>(i);
    const double x = kWidth - kRight + 16;
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         kColors[i % kColors.size()] + "\"/>\n";
    s += "<text x=\"" + num(x + 16) + "\" y=\"" + num(y) + "\">" + xml_escape(names[i]) +
         "</text>\n";
  }
  return s;
}

}  // namespace

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '-':
        // keeps "--" out of the provenance comment
        out += (!out.empty() && out.back() == '-') ? "&#45;" : "-";
        break;
      default: out += c;
    }
  }
  return out;
}

std::string line_svg(const LinePlot& plot, const std::string& provenance) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = -x0;
  for (const auto& s : plot.series) {
    require(s.x.size() == s.y.size(), ErrorKind::kShape,
            "series '" + s.label + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      require(std::isfinite(s.x[i]) && std::isfinite(s.y[i]), ErrorKind::kContract,
              "series '" + s.label + "' has a non-finite point");
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y1 = 1;
  double y0 = 0.0;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1 * 1.05};

  std::string s = header(provenance, plot.title, plot.notes) + axes(f, plot.x_label, plot.y_label);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& ser = plot.series[k];
    names.push_back(ser.label);
    if (ser.x.empty()) continue;
    std::string d;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      d += (i == 0 ? "M" : " L") + num(f.px(ser.x[i])) + " " + num(f.py(ser.y[i]));
    }
    s += "<path d=\"" + d + "\" fill=\"none\" stroke-width=\"1.5\" stroke=\"" +
         kColors[k % kColors.size()] + "\"/>\n";
  }
  return s + legend(names) + "</svg>\n";
}

std::string scatter_svg(const ScatterPlot& plot, const std::string& provenance) {
  require(plot.points.size() == plot.labels.size(), ErrorKind::kShape,
          "scatter labels do not align with points");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t i = 0; i < plot.points.size(); ++i) {
    const auto& p = plot.points[i];
    require(std::isfinite(p[0]) && std::isfinite(p[1]), ErrorKind::kContract,
            "scatter point " + std::to_string(i) + " is not finite");
    require(plot.labels[i] >= 0 && static_cast<std::size_t>(plot.labels[i]) < plot.class_names.size(),
            ErrorKind::kIndex, "scatter label out of range");
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1};
  std::string s = header(provenance, plot.title, plot.notes) + axes(f, "t-SNE 1", "t-SNE 2");
  for (std::size_t i = 0; i < plot.points.size(); ++i) {
    s += "<circle cx=\"" + num(f.px(plot.points[i][0])) + "\" cy=\"" + num(f.py(plot.points[i][1])) +
         "\" r=\"2.5\" fill-opacity=\"0.7\" fill=\"" +
         kColors[static_cast<std::size_t>(plot.labels[i]) % kColors.size()] + "\"/>\n";
  }
  return s + legend(plot.class_names) + "</svg>\n";
}

}  // namespace ulrn::report

#pragma once

#include <array>
#include <string>
#include <vector>

namespace ulrn::report {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<std::string> notes;  // printed under the title, one per line
};

struct ScatterPlot {
  std::string title;
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;               // index into class_names
  std::vector<std::string> class_names;
  std::vector<std::string> notes;
};

// Self-contained SVG documents. Numbers are printed with fixed precision so
// equal inputs give identical bytes. `provenance` lands in a leading comment.
std::string line_svg(const LinePlot& plot, const std::string& provenance);
std::string scatter_svg(const ScatterPlot& plot, const std::string& provenance);

std::string xml_escape(const std::string& text);

}  // namespace ulrn::report

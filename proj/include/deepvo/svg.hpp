#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace deepvo {

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

/// Line chart. Polylines carry raw data coordinates (formatted with format_real) and are
/// mapped to the canvas by a group transform, so plotted points equal the CSV values.
struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool equal_aspect = false;
  std::vector<SvgSeries> series;
};

std::string render_svg(const SvgPlot& plot);
void write_svg(const std::filesystem::path& path, const SvgPlot& plot);

}  // namespace deepvo

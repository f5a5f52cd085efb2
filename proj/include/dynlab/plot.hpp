#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dynlab {

enum class PlotKind { Histogram, Scatter, Spectrum, Recovery };
PlotKind plot_kind_from_name(std::string_view name);  // hist|histogram|scatter|spectrum|recovery

// Histogram series carry their samples in `y` and leave `x` empty; the other
// kinds need x and y of equal length.
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
  int bins = 30;
  bool log_y = false;
};

// Self-contained SVG document with axes, tick labels and a legend.
std::string emit_plot(PlotKind kind, const std::vector<Series>& data, const PlotStyle& style = {});

std::string xml_escape(std::string_view s);

}  // namespace dynlab

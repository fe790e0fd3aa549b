#pragma once

#include <string>
#include <vector>

namespace aelab::svg {

/// One plotted series: a polyline, a point cloud, or both.  Series with an
/// empty label stay out of the legend.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = true;
  double point_radius = 0.0;
  int color = -1;  // palette index; -1 assigns by series order
};

/// Minimal standalone SVG: framed axes with tick labels, one polyline or
/// point set per series, a legend, and a title.  Non-finite samples are
/// dropped.  Output is deterministic for identical input.
std::string render_plot(const std::vector<Series>& series,
                        const std::string& title, const std::string& x_label,
                        const std::string& y_label, int width = 720,
                        int height = 480, bool equal_aspect = false);

/// Each builder below is a pure function of one CSV artifact: same bytes
/// in, same bytes out.

/// Training curves (train/test rmse vs iteration) from a run record CSV.
std::string run_csv_to_svg(const std::string& csv);

/// Data vs reconstruction scatter from a reconstruction CSV.
std::string scatter_csv_to_svg(const std::string& csv);

/// Original and mapped polar grid polylines from a deformed-grid CSV.
std::string grid_csv_to_svg(const std::string& csv);

/// Penalty landscape curves from a shapes CSV.
std::string shapes_csv_to_svg(const std::string& csv);

/// Gradient-norm decay (log10) from a descent trajectory CSV.
std::string gnorm_csv_to_svg(const std::string& csv);

}  // namespace aelab::svg

#pragma once

// Figure data: each rotation as its canonical axis (longitude, latitude) plus
// the tilt about that axis, and a Mollweide scatter rendered as SVG.

#include <filesystem>
#include <string>
#include <vector>

#include "so3diff/sample_set.hpp"

namespace so3diff::plot {

struct PlotPoint {
  double longitude;  // radians, (-pi, pi]
  double latitude;   // radians, [-pi/2, pi/2]
  double tilt;       // radians, (-pi, pi]
};

PlotPoint project(const Rotationd& r);
std::vector<PlotPoint> project_all(const SampleSet& s);

/// Mollweide map coordinates, x in [-2 sqrt 2, 2 sqrt 2], y in [-sqrt 2, sqrt 2].
Eigen::Vector2d mollweide(double longitude, double latitude);

std::string to_csv(const std::vector<PlotPoint>& pts);
std::string to_svg(const std::vector<PlotPoint>& pts, int width = 800);

void write_plot(const std::filesystem::path& csv_path, const SampleSet& s,
                const std::filesystem::path& svg_path = {});

}  // namespace so3diff::plot

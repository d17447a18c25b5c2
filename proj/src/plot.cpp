#include "so3diff/plot.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "so3diff/io.hpp"

namespace so3diff::plot {

namespace {
constexpr double kPi = std::numbers::pi;
}

PlotPoint project(const Rotationd& r) {
  const auto ca = canonical_axis(r);
  const Eigen::Vector3d& a = ca.axis;
  return {std::atan2(a.y(), a.x()), std::asin(std::clamp(a.z(), -1.0, 1.0)), ca.tilt};
}

std::vector<PlotPoint> project_all(const SampleSet& s) {
  std::vector<PlotPoint> out;
  out.reserve(s.size());
  for (const auto& r : s.rotations) out.push_back(project(r));
  return out;
}

Eigen::Vector2d mollweide(double longitude, double latitude) {
  // Solve 2t + sin 2t = pi sin(lat) by Newton.
  double t = latitude;
  const double target = kPi * std::sin(latitude);
  if (std::abs(std::abs(latitude) - kPi / 2) > 1e-12) {
    for (int it = 0; it < 50; ++it) {
      const double f = 2 * t + std::sin(2 * t) - target;
      const double df = 2 + 2 * std::cos(2 * t);
      if (df < 1e-15) break;
      const double step = f / df;
      t -= step;
      if (std::abs(step) < 1e-13) break;
    }
  }
  return {2 * std::numbers::sqrt2 / kPi * longitude * std::cos(t), std::numbers::sqrt2 * std::sin(t)};
}

std::string to_csv(const std::vector<PlotPoint>& pts) {
  std::ostringstream out;
  out << "longitude,latitude,tilt\n";
  for (const auto& p : pts) {
    out << io::format_double(p.longitude) << ',' << io::format_double(p.latitude) << ',' << io::format_double(p.tilt)
        << '\n';
  }
  return out.str();
}

std::string to_svg(const std::vector<PlotPoint>& pts, int width) {
  const double scale = width / (4 * std::numbers::sqrt2 + 0.2);
  const int height = static_cast<int>(std::ceil(scale * (2 * std::numbers::sqrt2 + 0.2)));
  const double cx = width / 2.0, cy = height / 2.0;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<ellipse cx=\"" << cx << "\" cy=\"" << cy << "\" rx=\"" << 2 * std::numbers::sqrt2 * scale << "\" ry=\""
      << std::numbers::sqrt2 * scale << "\" fill=\"#f4f4f4\" stroke=\"#333\"/>\n";
  char buf[160];
  for (const auto& p : pts) {
    const Eigen::Vector2d m = mollweide(p.longitude, p.latitude);
    // Tilt mapped to hue.
    const int hue = static_cast<int>(std::lround((p.tilt + kPi) / (2 * kPi) * 359.0));
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.5\" fill=\"hsl(%d,80%%,45%%)\"/>\n",
                  cx + scale * m.x(), cy - scale * m.y(), hue);
    out << buf;
  }
  out << "</svg>\n";
  return out.str();
}

void write_plot(const std::filesystem::path& csv_path, const SampleSet& s, const std::filesystem::path& svg_path) {
  const auto pts = project_all(s);
  io::write_text_atomic(csv_path, to_csv(pts));
  if (!svg_path.empty()) io::write_text_atomic(svg_path, to_svg(pts));
}

}  // namespace so3diff::plot

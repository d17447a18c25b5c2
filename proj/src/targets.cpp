#include "so3diff/targets.hpp"

#include <cmath>
#include <numbers>

#include "so3diff/igso3.hpp"

namespace so3diff::targets {

namespace {

constexpr double kPi = std::numbers::pi;

Rotationd axis_rotation(const Tangentd& v) { return expm<double>(v); }

int cell(double value, double lo, double hi, int cells) {
  const int c = static_cast<int>(std::floor((value - lo) / (hi - lo) * cells));
  return std::clamp(c, 0, cells - 1);
}

void check_n(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
}

}  // namespace

std::vector<Rotationd> four_gaussian_means() {
  return {Rotationd::identity(), axis_rotation({kPi, 0, 0}), axis_rotation({0, kPi / 2, 0}),
          axis_rotation({0, -kPi / 2, 0}) * axis_rotation({0, 0, kPi})};
}

std::vector<Rotationd> blob_centers() { return {Rotationd::identity(), axis_rotation({0, kBlobSeparation, 0})}; }

bool checkerboard_accepts(const Rotationd& r) {
  const auto ca = canonical_axis(r);
  const int ia = cell(std::atan2(ca.axis.y(), ca.axis.x()), -kPi, kPi, kCheckerAzimuthCells);
  const int ip = cell(ca.axis.z(), -1.0, 1.0, kCheckerPolarCells);
  const int it = cell(ca.tilt, -kPi, kPi, kCheckerTiltCells);
  return (ia + ip + it) % 2 == 0;
}

int stripe_of(const Rotationd& r) {
  const double z = (r.matrix() * Eigen::Vector3d::UnitZ()).z();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(z - kStripeCenters[k]) <= kStripeHalfWidth) return k;
  }
  return -1;
}

SampleSet sample_checkerboard(int n, Rng& rng) {
  check_n(n);
  SampleSet s;
  s.label = "checkerboard";
  s.rotations.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(s.size()) < n) {
    const Rotationd r = sample_uniform<double>(rng);
    if (checkerboard_accepts(r)) s.rotations.push_back(r);
  }
  return s;
}

SampleSet sample_four_gaussians(int n, Rng& rng, double eps) {
  check_n(n);
  const auto means = four_gaussian_means();
  std::uniform_int_distribution<int> pick(0, 3);
  SampleSet s;
  s.label = "four-gaussians";
  s.rotations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s.rotations.push_back(igso3::sample({means[pick(rng)], eps}, rng));
  return s;
}

SampleSet sample_three_stripes(int n, Rng& rng) {
  check_n(n);
  std::uniform_int_distribution<int> band(0, 2);
  std::uniform_real_distribution<double> offset(-kStripeHalfWidth, kStripeHalfWidth);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  SampleSet s;
  s.label = "three-stripes";
  s.rotations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double z = kStripeCenters[band(rng)] + offset(rng);
    const double phi = angle(rng);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Eigen::Vector3d axis(rho * std::cos(phi), rho * std::sin(phi), z);
    s.rotations.push_back(from_canonical_axis<double>(axis, angle(rng)));
  }
  return s;
}

SampleSet sample_uniform_set(int n, Rng& rng) {
  check_n(n);
  SampleSet s;
  s.label = "uniform";
  s.rotations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s.rotations.push_back(sample_uniform<double>(rng));
  return s;
}

SampleSet sample_blob(int n, const Rotationd& center, double eps, Rng& rng) {
  check_n(n);
  SampleSet s;
  s.label = "blob";
  s.rotations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s.rotations.push_back(igso3::sample({center, eps}, rng));
  return s;
}

SampleSet sample_two_blobs(int n, Rng& rng) {
  check_n(n);
  const auto centers = blob_centers();
  std::bernoulli_distribution coin(0.5);
  SampleSet s;
  s.label = "two-blobs";
  s.rotations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s.rotations.push_back(igso3::sample({centers[coin(rng) ? 1 : 0], kBlobEps}, rng));
  return s;
}

SampleSet sample_conditional_blobs(int n, Rng& rng) {
  check_n(n);
  const auto centers = blob_centers();
  std::bernoulli_distribution coin(0.5);
  SampleSet s;
  s.label = "conditional-blobs";
  s.rotations.reserve(static_cast<std::size_t>(n));
  s.contexts.resize(1, n);
  for (int i = 0; i < n; ++i) {
    const int b = coin(rng) ? 1 : 0;
    s.rotations.push_back(igso3::sample({centers[b], kBlobEps}, rng));
    s.contexts(0, i) = b;
  }
  return s;
}

int nearest_blob(const Rotationd& r) {
  const auto centers = blob_centers();
  return geodesic_angle(r, centers[0]) <= geodesic_angle(r, centers[1]) ? 0 : 1;
}

const std::vector<std::string>& target_names() {
  static const std::vector<std::string> names{"checkerboard", "four-gaussians", "three-stripes",
                                              "uniform",      "two-blobs",      "conditional-blobs"};
  return names;
}

SampleSet sample_target(const std::string& name, int n, Rng& rng) {
  if (name == "checkerboard") return sample_checkerboard(n, rng);
  if (name == "four-gaussians") return sample_four_gaussians(n, rng);
  if (name == "three-stripes") return sample_three_stripes(n, rng);
  if (name == "uniform") return sample_uniform_set(n, rng);
  if (name == "two-blobs") return sample_two_blobs(n, rng);
  if (name == "conditional-blobs") return sample_conditional_blobs(n, rng);
  std::string list;
  for (const auto& v : target_names()) list += (list.empty() ? "" : ", ") + v;
  throw Error(ErrorCode::UnknownTarget, "unknown target '" + name + "'; valid targets: " + list);
}

}  // namespace so3diff::targets

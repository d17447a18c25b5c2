#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "so3diff/random.hpp"
#include "so3diff/so3.hpp"
#include "so3diff/stats.hpp"

namespace testing {

using namespace so3diff;

inline constexpr double kPi = std::numbers::pi;

/// CDF of the rotation angle under the Haar measure.
inline double haar_angle_cdf(double w) { return (w - std::sin(w)) / kPi; }

inline std::vector<double> angles(const std::vector<Rotationd>& xs, const Rotationd& ref = Rotationd::identity()) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(geodesic_angle(ref, x));
  return out;
}

inline Tangentd random_tangent(Rng& rng, double max_norm) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return sample_unit_vector<double>(rng) * (max_norm * u(rng));
}

inline double max_abs_diff(const Matrix3<double>& a, const Matrix3<double>& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace testing

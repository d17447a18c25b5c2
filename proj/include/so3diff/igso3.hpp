#pragma once

// Isotropic Gaussian on SO(3): the heat kernel f_eps(omega) relative to the
// Haar measure, with
//
//   f_eps(w) = sum_l (2l + 1) exp(-l (l + 1) eps) chi_l(w),
//   chi_l(w) = sin((l + 1/2) w) / sin(w / 2) = 1 + 2 sum_{m=1..l} cos(m w).
//
// The exponent is linear in eps (not eps^2): this is the parameterisation under
// which the closed-form small-eps expression matches the series, the
// convolution of IG(eps1) and IG(eps2) is IG(eps1 + eps2), and the small-eps
// limit is a tangent-space N(0, 2 eps I). Brownian motion with generator
// Delta run for time eps has law IG(eps).

#include <memory>
#include <vector>

#include "so3diff/random.hpp"
#include "so3diff/so3.hpp"

namespace so3diff::igso3 {

/// Below this scale the closed form is used, at or above it the series.
inline constexpr double kCrossover = 1.0;
inline constexpr int kMaxLmax = 2000;
inline constexpr double kSeriesTol = 1e-12;
inline constexpr int kCdfGrid = 1024;
/// Relative resolution of the CDF cache key (log-space step).
inline constexpr double kEpsKeyStep = 1e-3;
/// Score is undefined this close to the cut locus.
inline constexpr double kCutLocusMargin = 1e-4;

struct IGParams {
  Rotationd mu;
  double eps;
};

/// Truncated character series, terms l = 0..l_max.
double f_series(double omega, double eps, int l_max);
/// Number of terms needed for |term| < kSeriesTol; throws Unconverged past kMaxLmax.
int series_lmax(double eps);
/// Closed-form small-scale expression.
double f_approx(double omega, double eps);
double f_eps(double omega, double eps);

/// log f_eps evaluated without forming f (no underflow at small eps).
double log_f(double omega, double eps);
double dlog_f_domega(double omega, double eps);
/// (d log f / d omega) / sin(omega): finite at omega = 0, used by chain rules
/// through arccos of the trace.
double dlog_f_domega_over_sin(double omega, double eps);
double dlog_f_deps(double omega, double eps);

/// Inverse-transform table for the rotation angle.
struct AngleCdfTable {
  double eps = 0.0;
  std::vector<double> grid;
  std::vector<double> cdf;
  /// Trapezoid mass before renormalisation (should be ~1).
  double raw_mass = 0.0;

  double quantile(double u) const;
  double cdf_at(double omega) const;
};

AngleCdfTable build_cdf(double eps, int n_grid = kCdfGrid);

/// eps snapped to the cache grid; samplers draw from IG(quantize_eps(eps)).
double quantize_eps(double eps);
/// Shared, lazily built table for quantize_eps(eps). Thread-safe.
std::shared_ptr<const AngleCdfTable> cached_cdf(double eps);

double sample_angle(double eps, Rng& rng);
/// mu * expm(omega v) with omega by inverse transform and v uniform on S^2.
Rotationd sample(const IGParams& params, Rng& rng);

/// log density relative to the Haar measure.
double log_density(const Rotationd& x, const IGParams& params);

/// Right-trivialised gradient: component i is d/ds log p(x expm(s hat(e_i))).
Tangentd score(const Rotationd& x, const IGParams& params);

}  // namespace so3diff::igso3

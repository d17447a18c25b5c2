#include "so3diff/igso3.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <unordered_map>

namespace so3diff::igso3 {

namespace {

constexpr double kPi = std::numbers::pi;

void check_eps(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorCode::InvalidArgument, "eps must be positive and finite");
}

// Partial sums of the series and its derivatives, evaluated together.
struct SeriesTerms {
  double f = 0.0;
  double df_domega = 0.0;
  double df_domega_over_sin = 0.0;
  double df_deps = 0.0;
};

SeriesTerms series_terms(double omega, double eps, int l_max) {
  const double w = std::abs(omega);
  const double x = std::cos(w);
  SeriesTerms s;
  double chi = 1.0;        // chi_l(w)
  double dchi = 0.0;       // d chi_l / dw
  double dchi_sin = 0.0;   // (d chi_l / dw) / sin(w) = -2 sum m U_{m-1}(cos w)
  double u_prev = 0.0;     // U_{m-2}
  double u_cur = 1.0;      // U_{m-1}
  for (int l = 0; l <= l_max; ++l) {
    if (l > 0) {
      chi += 2.0 * std::cos(l * w);
      dchi -= 2.0 * l * std::sin(l * w);
      dchi_sin -= 2.0 * l * u_cur;
      const double u_next = 2.0 * x * u_cur - u_prev;
      u_prev = u_cur;
      u_cur = u_next;
    }
    const double ll = static_cast<double>(l) * (l + 1);
    const double weight = (2.0 * l + 1.0) * std::exp(-ll * eps);
    s.f += weight * chi;
    s.df_domega += weight * dchi;
    s.df_domega_over_sin += weight * dchi_sin;
    s.df_deps -= ll * weight * chi;
  }
  return s;
}

// Bracket of the closed form, B(w) = w + (2pi - w) e^{pi (w - pi)/eps}
// - (w + 2pi) e^{-pi (w + pi)/eps}, and its partial derivatives.
struct Bracket {
  double b, db_domega, db_deps;
};

Bracket bracket(double w, double eps) {
  const double a = kPi / eps;
  const double e1 = std::exp(a * (w - kPi));
  const double e2 = std::exp(-a * (w + kPi));
  Bracket r;
  r.b = w + (2.0 * kPi - w) * e1 - (w + 2.0 * kPi) * e2;
  r.db_domega = 1.0 + e1 * (-1.0 + (2.0 * kPi - w) * a) + e2 * (-1.0 + (w + 2.0 * kPi) * a);
  r.db_deps = (2.0 * kPi - w) * e1 * (-a * (w - kPi) / eps) - (w + 2.0 * kPi) * e2 * (a * (w + kPi) / eps);
  return r;
}

// Small-angle expansion: B(w) / (2 sin(w/2)) = c (1 + k w^2) + O(w^4).
struct SmallAngle {
  double c, k, dlogc_deps;
};

SmallAngle small_angle(double eps) {
  const double a = kPi / eps;
  const double e = std::exp(-kPi * kPi / eps);
  SmallAngle s;
  s.c = 1.0 + 2.0 * e * (2.0 * kPi * a - 1.0);
  const double d = e * (2.0 * kPi * a * a * a - 3.0 * a * a) / 3.0;
  s.k = d / s.c + 1.0 / 24.0;
  s.dlogc_deps = 2.0 * e * (kPi * kPi / (eps * eps)) * (2.0 * kPi * kPi / eps - 3.0) / s.c;
  return s;
}

constexpr double kSmallOmega = 1e-4;

double log_f_approx(double omega, double eps) {
  const double w = std::abs(omega);
  const double base = 0.5 * std::log(kPi) - 1.5 * std::log(eps) + 0.25 * eps - w * w / (4.0 * eps);
  if (w < kSmallOmega) {
    const SmallAngle s = small_angle(eps);
    return base + std::log(s.c) + std::log1p(s.k * w * w);
  }
  return base + std::log(bracket(w, eps).b) - std::log(2.0 * std::sin(0.5 * w));
}

double dlog_f_domega_approx(double omega, double eps) {
  const double w = std::abs(omega);
  const double sign = omega < 0.0 ? -1.0 : 1.0;
  double d;
  if (w < kSmallOmega) {
    d = -w / (2.0 * eps) + 2.0 * small_angle(eps).k * w;
  } else {
    const Bracket b = bracket(w, eps);
    d = -w / (2.0 * eps) + b.db_domega / b.b - 0.5 / std::tan(0.5 * w);
  }
  return sign * d;
}

double dlog_f_deps_approx(double omega, double eps) {
  const double w = std::abs(omega);
  const double base = -1.5 / eps + 0.25 + w * w / (4.0 * eps * eps);
  if (w < kSmallOmega) return base + small_angle(eps).dlogc_deps;
  const Bracket b = bracket(w, eps);
  return base + b.db_deps / b.b;
}

}  // namespace

double f_series(double omega, double eps, int l_max) {
  check_eps(eps);
  if (l_max < 0) throw Error(ErrorCode::InvalidArgument, "l_max must be non-negative");
  return series_terms(omega, eps, l_max).f;
}

int series_lmax(double eps) {
  check_eps(eps);
  for (int l = 0; l <= kMaxLmax; ++l) {
    const double bound = (2.0 * l + 1.0) * (2.0 * l + 1.0) * std::exp(-static_cast<double>(l) * (l + 1) * eps);
    if (l > 0 && bound < kSeriesTol) return l;
  }
  throw Error(ErrorCode::Unconverged, "heat-kernel series needs more than the l_max cap");
}

double f_approx(double omega, double eps) {
  check_eps(eps);
  return std::exp(log_f_approx(omega, eps));
}

double f_eps(double omega, double eps) {
  check_eps(eps);
  if (eps >= kCrossover) return f_series(omega, eps, series_lmax(eps));
  return f_approx(omega, eps);
}

double log_f(double omega, double eps) {
  check_eps(eps);
  if (eps >= kCrossover) {
    const double f = f_series(omega, eps, series_lmax(eps));
    if (!(f > 0.0)) throw Error(ErrorCode::NonPositiveDensity, "series value is not positive");
    return std::log(f);
  }
  return log_f_approx(omega, eps);
}

double dlog_f_domega(double omega, double eps) {
  check_eps(eps);
  if (eps >= kCrossover) {
    const SeriesTerms s = series_terms(omega, eps, series_lmax(eps));
    return (omega < 0.0 ? -1.0 : 1.0) * s.df_domega / s.f;
  }
  return dlog_f_domega_approx(omega, eps);
}

double dlog_f_domega_over_sin(double omega, double eps) {
  check_eps(eps);
  const double w = std::min(std::abs(omega), kPi - kCutLocusMargin);
  if (eps >= kCrossover) {
    const SeriesTerms s = series_terms(w, eps, series_lmax(eps));
    return s.df_domega_over_sin / s.f;
  }
  if (w < kSmallOmega) {
    return (-1.0 / (2.0 * eps) + 2.0 * small_angle(eps).k) * (1.0 + w * w / 6.0);
  }
  return dlog_f_domega_approx(w, eps) / std::sin(w);
}

double dlog_f_deps(double omega, double eps) {
  check_eps(eps);
  if (eps >= kCrossover) {
    const SeriesTerms s = series_terms(omega, eps, series_lmax(eps));
    return s.df_deps / s.f;
  }
  return dlog_f_deps_approx(omega, eps);
}

// ---------------------------------------------------------------------------

double AngleCdfTable::quantile(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.begin()) return grid.front();
  if (it == cdf.end()) return grid.back();
  const std::size_t i = static_cast<std::size_t>(it - cdf.begin());
  const double c0 = cdf[i - 1], c1 = cdf[i];
  const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  return grid[i - 1] + t * (grid[i] - grid[i - 1]);
}

double AngleCdfTable::cdf_at(double omega) const {
  if (omega <= grid.front()) return 0.0;
  if (omega >= grid.back()) return 1.0;
  const auto it = std::upper_bound(grid.begin(), grid.end(), omega);
  const std::size_t i = static_cast<std::size_t>(it - grid.begin());
  const double t = (omega - grid[i - 1]) / (grid[i] - grid[i - 1]);
  return cdf[i - 1] + t * (cdf[i] - cdf[i - 1]);
}

AngleCdfTable build_cdf(double eps, int n_grid) {
  check_eps(eps);
  if (n_grid < 64) throw Error(ErrorCode::InvalidArgument, "CDF grid needs at least 64 points");
  // For concentrated kernels the mass beyond 8 tangent standard deviations is
  // below 1e-14; spend the grid where the mass is.
  const double omega_max = std::min(kPi, 8.0 * std::sqrt(2.0 * eps));
  AngleCdfTable table;
  table.eps = eps;
  table.grid.resize(static_cast<std::size_t>(n_grid));
  table.cdf.resize(static_cast<std::size_t>(n_grid));
  std::vector<double> density(static_cast<std::size_t>(n_grid));
  for (int i = 0; i < n_grid; ++i) {
    const double w = omega_max * i / (n_grid - 1);
    table.grid[i] = w;
    if (i == 0) {
      density[i] = 0.0;
      continue;
    }
    // (1 - cos w) / pi * f_eps(w), assembled in log space.
    const double log_haar = std::log(2.0 * std::sin(0.5 * w) * std::sin(0.5 * w)) - std::log(kPi);
    density[i] = std::exp(log_haar + log_f(w, eps));
    if (!std::isfinite(density[i])) {
      throw Error(ErrorCode::NonFiniteDensity, "angle density evaluation is not finite");
    }
  }
  table.cdf[0] = 0.0;
  for (int i = 1; i < n_grid; ++i) {
    table.cdf[i] = table.cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * (table.grid[i] - table.grid[i - 1]);
  }
  table.raw_mass = table.cdf.back();
  for (double& c : table.cdf) c /= table.raw_mass;
  table.cdf.back() = 1.0;
  return table;
}

namespace {

std::int64_t eps_key(double eps) { return std::llround(std::log(eps) / kEpsKeyStep); }

struct CdfCache {
  std::shared_mutex mutex;
  std::unordered_map<std::int64_t, std::shared_ptr<const AngleCdfTable>> tables;
};

CdfCache& cache() {
  static CdfCache c;
  return c;
}

}  // namespace

double quantize_eps(double eps) {
  check_eps(eps);
  return std::exp(static_cast<double>(eps_key(eps)) * kEpsKeyStep);
}

std::shared_ptr<const AngleCdfTable> cached_cdf(double eps) {
  check_eps(eps);
  const std::int64_t key = eps_key(eps);
  CdfCache& c = cache();
  {
    std::shared_lock lock(c.mutex);
    if (auto it = c.tables.find(key); it != c.tables.end()) return it->second;
  }
  auto table = std::make_shared<const AngleCdfTable>(build_cdf(std::exp(static_cast<double>(key) * kEpsKeyStep)));
  std::unique_lock lock(c.mutex);
  return c.tables.try_emplace(key, std::move(table)).first->second;
}

double sample_angle(double eps, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return cached_cdf(eps)->quantile(uniform(rng));
}

Rotationd sample(const IGParams& params, Rng& rng) {
  const double omega = sample_angle(params.eps, rng);
  const Vector3<double> axis = sample_unit_vector(rng);
  return params.mu * expm<double>(omega * axis);
}

double log_density(const Rotationd& x, const IGParams& params) {
  const double lf = log_f(geodesic_angle(params.mu, x), params.eps);
  if (std::isnan(lf) || lf == -std::numeric_limits<double>::infinity()) {
    throw Error(ErrorCode::NonPositiveDensity, "density underflow");
  }
  return lf;
}

Tangentd score(const Rotationd& x, const IGParams& params) {
  check_eps(params.eps);
  const Tangentd v = logm(params.mu.inverse() * x);
  const double omega = v.norm();
  if (omega > kPi - kCutLocusMargin) {
    throw Error(ErrorCode::NearCutLocus, "score undefined near the cut locus");
  }
  if (omega < 1e-6) return dlog_f_domega_over_sin(omega, params.eps) * v;
  return dlog_f_domega(omega, params.eps) / omega * v;
}

}  // namespace so3diff::igso3

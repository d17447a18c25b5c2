#include "so3diff/geom_ode.hpp"

#include <cmath>
#include <numbers>

namespace so3diff {

TimeGrid::TimeGrid(std::vector<double> t) : t_(std::move(t)) {
  if (t_.size() < 2) throw Error(ErrorCode::InvalidArgument, "time grid needs at least one step");
  const bool increasing = t_[1] > t_[0];
  for (std::size_t i = 1; i < t_.size(); ++i) {
    const bool ok = increasing ? t_[i] > t_[i - 1] : t_[i] < t_[i - 1];
    if (!ok || !std::isfinite(t_[i])) throw Error(ErrorCode::InvalidArgument, "time grid must be strictly monotone");
  }
}

TimeGrid TimeGrid::uniform(double t0, double t1, int n_steps) {
  if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");
  std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
  for (int i = 0; i <= n_steps; ++i) t[i] = t0 + (t1 - t0) * i / n_steps;
  t.back() = t1;
  return TimeGrid(std::move(t));
}

TimeGrid TimeGrid::geometric(double t0, double t1, int n_steps) {
  if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");
  if (!(t0 > 0.0 && t1 > 0.0)) throw Error(ErrorCode::InvalidArgument, "geometric grid needs positive endpoints");
  std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
  const double l0 = std::log(t0), l1 = std::log(t1);
  for (int i = 0; i <= n_steps; ++i) t[i] = std::exp(l0 + (l1 - l0) * i / n_steps);
  t.front() = t0;
  t.back() = t1;
  return TimeGrid(std::move(t));
}

namespace {

Tangentd checked_increment(const Tangentd& f, double h) {
  if (!f.allFinite()) throw Error(ErrorCode::NonFiniteField, "vector field returned a non-finite value");
  const Tangentd y = h * f;
  if (y.norm() > std::numbers::pi) throw Error(ErrorCode::StepTooLarge, "increment crosses the cut locus; reduce h");
  return y;
}

}  // namespace

std::vector<Rotationd> heun_integrate(const VectorField& f, const Rotationd& x0, const TimeGrid& grid) {
  std::vector<Rotationd> traj;
  traj.reserve(static_cast<std::size_t>(grid.n_steps()) + 1);
  traj.push_back(x0);
  for (int n = 0; n < grid.n_steps(); ++n) {
    const double t = grid[n];
    const double h = grid[n + 1] - t;
    const Rotationd& x = traj.back();
    const Tangentd y1 = checked_increment(f(x, t), h);
    const Tangentd y2 = checked_increment(f(expm<double>(0.5 * y1) * x, t + 0.5 * h), h);
    traj.push_back(expm<double>(y2) * x);
  }
  return traj;
}

void heun_integrate_batch(const BatchVectorField& f, std::vector<Rotationd>& xs, const TimeGrid& grid) {
  std::vector<Tangentd> k(xs.size());
  std::vector<Rotationd> mid(xs.size());
  for (int n = 0; n < grid.n_steps(); ++n) {
    const double t = grid[n];
    const double h = grid[n + 1] - t;
    f(xs, t, k);
    for (std::size_t i = 0; i < xs.size(); ++i) mid[i] = expm<double>(0.5 * checked_increment(k[i], h)) * xs[i];
    f(mid, t + 0.5 * h, k);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = expm<double>(checked_increment(k[i], h)) * xs[i];
  }
}

VectorField right_to_left(VectorField g) {
  return [g = std::move(g)](const Rotationd& x, double t) -> Tangentd { return x * g(x, t); };
}

Rotationd geodesic_random_walk(const VectorField& f, const std::function<double(double)>& g,
                               const Rotationd& x0, const TimeGrid& grid, Rng& rng) {
  std::normal_distribution<double> normal;
  Rotationd x = x0;
  for (int n = 0; n < grid.n_steps(); ++n) {
    const double t = grid[n];
    const double h = grid[n + 1] - t;
    if (h <= 0.0) throw Error(ErrorCode::InvalidArgument, "random walk needs a forward grid");
    const double gt = g(t);
    if (gt < 0.0) throw Error(ErrorCode::InvalidArgument, "diffusion coefficient must be non-negative");
    const Tangentd xi(normal(rng), normal(rng), normal(rng));
    const Tangentd drift = f(x, t);
    if (!drift.allFinite()) throw Error(ErrorCode::NonFiniteField, "vector field returned a non-finite value");
    x = expm<double>(h * drift + std::sqrt(2.0 * h) * gt * xi) * x;
  }
  return x;
}

}  // namespace so3diff

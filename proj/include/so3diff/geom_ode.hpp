#pragma once

// Integration on SO(3): the Runge-Kutta-Munthe-Kaas Heun scheme and a
// geodesic random walk used as an SDE oracle.

#include <functional>
#include <span>
#include <vector>

#include "so3diff/random.hpp"
#include "so3diff/so3.hpp"

namespace so3diff {

/// Strictly monotone times; decreasing grids integrate backwards.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> t);

  static TimeGrid uniform(double t0, double t1, int n_steps);
  /// Log-uniform spacing between t0 and t1 (both > 0).
  static TimeGrid geometric(double t0, double t1, int n_steps);

  const std::vector<double>& times() const { return t_; }
  int n_steps() const { return static_cast<int>(t_.size()) - 1; }
  double operator[](int i) const { return t_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<double> t_;
};

/// Drift in left-multiplied form: dx/dt = hat(f(x, t)) x.
using VectorField = std::function<Tangentd(const Rotationd&, double)>;
/// Batched drift: fills `out` with one tangent per state.
using BatchVectorField =
    std::function<void(std::span<const Rotationd>, double, std::vector<Tangentd>& out)>;

/// y1 = h f(x_n, t_n); y2 = h f(expm(y1/2) x_n, t_n + h/2); x_{n+1} = expm(y2) x_n.
/// Returns the full trajectory x_0..x_N.
std::vector<Rotationd> heun_integrate(const VectorField& f, const Rotationd& x0, const TimeGrid& grid);

/// Same scheme over a batch of states, in place; returns nothing but the
/// terminal states in `xs`.
void heun_integrate_batch(const BatchVectorField& f, std::vector<Rotationd>& xs, const TimeGrid& grid);

/// Wraps a right-trivialised field g (dx/dt = x hat(g)) as a left one:
/// x hat(g) = hat(x g) x.
VectorField right_to_left(VectorField g);

/// x_{n+1} = expm(h f(x_n, t_n) + sqrt(2 h) g(t_n) xi) x_n, xi ~ N(0, I).
/// The noise is scaled for Brownian motion with generator Delta, so constant
/// g over total time T reaches IG(x0, g^2 T) when f = 0.
Rotationd geodesic_random_walk(const VectorField& f, const std::function<double(double)>& g,
                               const Rotationd& x0, const TimeGrid& grid, Rng& rng);

}  // namespace so3diff

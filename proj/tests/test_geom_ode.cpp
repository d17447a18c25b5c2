#include <doctest.h>

#include "helpers.hpp"
#include "so3diff/geom_ode.hpp"
#include "so3diff/igso3.hpp"

using namespace testing;

TEST_CASE("time grids") {
  CHECK_THROWS_AS(TimeGrid({0.0, 1.0, 1.0}), Error);
  CHECK_THROWS_AS(TimeGrid({0.0}), Error);
  const auto g = TimeGrid::geometric(3.0, 1e-3, 100);
  CHECK(g[0] == 3.0);
  CHECK(g[100] == 1e-3);
  CHECK(g.n_steps() == 100);
  CHECK(std::abs(g[1] / g[0] - g[100] / g[99]) < 1e-12);
}

TEST_CASE("constant and zero fields") {
  const Rotationd x0 = expm<double>(Tangentd(0.2, 0.5, -0.3));
  const Tangentd c(0.1, -0.2, 0.05);
  const auto grid = TimeGrid::uniform(0.0, 1.0, 10);
  const auto traj = heun_integrate([&](const Rotationd&, double) { return c; }, x0, grid);
  CHECK(traj.size() == 11);
  CHECK(max_abs_diff(traj[1].matrix(), (expm<double>(Tangentd(0.1 * c)) * x0).matrix()) == 0.0);
  CHECK(max_abs_diff(traj.back().matrix(), (expm(c) * x0).matrix()) < 1e-14);
  const auto still = heun_integrate([](const Rotationd&, double) { return Tangentd::Zero(); }, x0, grid);
  for (const auto& x : still) CHECK(x == x0);
}

TEST_CASE("state-independent fields act by left increments") {
  // x_N = expm(y_N) ... expm(y_1) x0, so x_N x0^T does not depend on x0.
  auto f = [](const Rotationd&, double t) { return Tangentd(std::cos(t), t, 0.3); };
  const auto grid = TimeGrid::uniform(0.0, 2.0, 20);
  Rng rng(1);
  const Rotationd a = sample_uniform<double>(rng), b = sample_uniform<double>(rng);
  const Rotationd ra = heun_integrate(f, a, grid).back() * a.inverse();
  const Rotationd rb = heun_integrate(f, b, grid).back() * b.inverse();
  CHECK(max_abs_diff(ra.matrix(), rb.matrix()) < 1e-12);
}

TEST_CASE("second-order convergence") {
  auto f = [](const Rotationd&, double t) { return Tangentd(0, 0, std::cos(t)); };
  const double T = 2.0;
  const Rotationd exact = expm<double>(Tangentd(0, 0, std::sin(T)));
  double prev = 0.0;
  for (int n : {10, 20, 40, 80}) {
    const double err = geodesic_angle(heun_integrate(f, Rotationd::identity(), TimeGrid::uniform(0, T, n)).back(), exact);
    if (prev > 0) {
      CHECK(prev / err > 3.5);
      CHECK(prev / err < 4.5);
    }
    prev = err;
  }
}

TEST_CASE("iterates stay on the group and errors are reported") {
  Rng rng(2);
  auto f = [](const Rotationd& x, double t) { return Tangentd(x.matrix()(0, 1) * 3, std::sin(5 * t), x.matrix()(2, 2)); };
  for (const auto& x : heun_integrate(f, sample_uniform<double>(rng), TimeGrid::uniform(0, 1, 7))) {
    CHECK((x.matrix().transpose() * x.matrix() - Matrix3<double>::Identity()).norm() < 1e-8);
    CHECK(std::abs(x.matrix().determinant() - 1.0) < 1e-8);
  }
  auto nan_field = [](const Rotationd&, double) { return Tangentd(std::nan(""), 0, 0); };
  CHECK_THROWS_AS(heun_integrate(nan_field, Rotationd::identity(), TimeGrid::uniform(0, 1, 2)), Error);
  auto big = [](const Rotationd&, double) { return Tangentd(10, 0, 0); };
  CHECK_THROWS_AS(heun_integrate(big, Rotationd::identity(), TimeGrid::uniform(0, 1, 2)), Error);
}

TEST_CASE("batched integration matches the single-state solver") {
  Rng rng(3);
  auto g = [](const Rotationd& x, double t) { return Tangentd(x.matrix()(1, 0), t, -x.matrix()(0, 2)); };
  const auto left = right_to_left(g);
  const auto grid = TimeGrid::geometric(2.0, 0.01, 30);
  std::vector<Rotationd> xs{sample_uniform<double>(rng), sample_uniform<double>(rng)};
  const auto ref0 = heun_integrate(left, xs[0], grid).back();
  const auto ref1 = heun_integrate(left, xs[1], grid).back();
  heun_integrate_batch(
      [&](std::span<const Rotationd> ys, double t, std::vector<Tangentd>& out) {
        for (std::size_t i = 0; i < ys.size(); ++i) out[i] = left(ys[i], t);
      },
      xs, grid);
  CHECK(xs[0] == ref0);
  CHECK(xs[1] == ref1);
  // Left form of a right-trivialised field: expm(h x g) x = x expm(h g).
  const Rotationd x = sample_uniform<double>(rng);
  const Tangentd v(0.1, 0.2, -0.3);
  CHECK(max_abs_diff((expm<double>(Tangentd(x * v)) * x).matrix(), (x * expm(v)).matrix()) < 1e-14);
}

TEST_CASE("geodesic random walk") {
  Rng rng(4);
  const Rotationd x0 = expm<double>(Tangentd(1, 2, 0.5));
  auto zero = [](const Rotationd&, double) { return Tangentd::Zero(); };
  CHECK(geodesic_random_walk(zero, [](double) { return 0.0; }, x0, TimeGrid::uniform(0, 1, 10), rng) == x0);
  CHECK_THROWS_AS(geodesic_random_walk(zero, [](double) { return 1.0; }, x0, TimeGrid::uniform(1, 0, 10), rng), Error);
  // Constant g = 1 for time 0.2 reaches IG(x0, 0.2).
  std::vector<double> walk, ref;
  for (int i = 0; i < 20000; ++i) {
    walk.push_back(geodesic_angle(x0, geodesic_random_walk(zero, [](double) { return 1.0; }, x0,
                                                           TimeGrid::uniform(0, 0.2, 100), rng)));
    ref.push_back(geodesic_angle(x0, igso3::sample({x0, 0.2}, rng)));
  }
  CHECK(stats::ks_2samp(walk, ref).p_value > 0.01);
  // Long run reaches Haar.
  std::vector<double> far;
  for (int i = 0; i < 5000; ++i) {
    far.push_back(geodesic_angle(x0, geodesic_random_walk(zero, [](double) { return 1.0; }, x0,
                                                          TimeGrid::uniform(0, 6.0, 60), rng)));
  }
  CHECK(stats::ks_1samp(far, haar_angle_cdf).p_value > 0.01);
}

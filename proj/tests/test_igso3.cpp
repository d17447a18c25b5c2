#include <doctest.h>

#include "helpers.hpp"
#include "so3diff/igso3.hpp"

using namespace testing;
namespace ig = so3diff::igso3;

namespace {

// Haar-weighted mass of f_eps by composite Simpson on [0, pi].
double haar_mass(double eps, int n = 10000) {
  const double h = kPi / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = i * h;
    const double c = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += c * (1.0 - std::cos(w)) / kPi * ig::f_eps(w, eps);
  }
  return s * h / 3.0;
}

// Brute-force f at omega = 0 in long double, independent of the library.
double f_zero_bruteforce(double eps) {
  long double s = 0.0L;
  for (int l = 0; l <= 1000; ++l) {
    s += static_cast<long double>(2 * l + 1) * (2 * l + 1) * std::exp(-static_cast<long double>(l) * (l + 1) * eps);
  }
  return static_cast<double>(s);
}

}  // namespace

TEST_CASE("series") {
  for (double w : {0.0, 0.7, 2.0, kPi}) CHECK(std::abs(ig::f_series(w, 10.0, 50) - 1.0) < 1e-6);
  for (double w : {0.1, 1.0, 2.5, 3.1}) {
    const double ref = ig::f_series(w, 1.0, 50);
    CHECK(std::abs(ig::f_series(w, 1.0, 5) - ref) / ref < 1e-2);
  }
  CHECK(std::abs(ig::f_series(0.0, 1.0, 1000) - f_zero_bruteforce(1.0)) < 1e-12 * f_zero_bruteforce(1.0));
  CHECK(std::abs(ig::f_series(1e-6, 1.0, 200) - f_zero_bruteforce(1.0)) < 1e-9);
  CHECK(ig::series_lmax(1.0) < 20);
  CHECK_THROWS_AS(ig::series_lmax(1e-7), Error);
}

TEST_CASE("closed form and crossover") {
  double worst = 0.0;
  for (double w = 0.05; w <= 3.0; w += 0.01) {
    const double s = ig::f_series(w, ig::kCrossover, ig::series_lmax(ig::kCrossover));
    worst = std::max(worst, std::abs(ig::f_approx(w, ig::kCrossover) - s) / s);
  }
  CHECK(worst < 0.01);
  for (double eps : {1e-3, 0.01, 0.5}) {
    CHECK(std::isfinite(ig::f_approx(kPi, eps)));
    CHECK(std::isfinite(ig::log_f(kPi, eps)));
    CHECK(std::isfinite(ig::f_approx(0.0, eps)));
    CHECK(std::abs(ig::f_approx(1e-7, eps) / ig::f_approx(0.0, eps) - 1.0) < 1e-8);
  }
  const double below = ig::f_eps(1.0, ig::kCrossover * (1 - 1e-9));
  const double above = ig::f_eps(1.0, ig::kCrossover);
  CHECK(std::abs(below - above) / above < 0.01);
  for (double w : {0.0, 1.0, 3.0}) CHECK(std::abs(ig::f_eps(w, 10.0) - 1.0) < 1e-6);
}

TEST_CASE("normalization against the Haar angle measure") {
  for (double eps : {0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 10.0}) CHECK(std::abs(haar_mass(eps) - 1.0) < 1e-3);
}

TEST_CASE("log-space evaluation and derivatives") {
  Rng rng(1);
  std::uniform_real_distribution<double> uw(0.05, 3.0), ue(0.02, 3.0);
  for (int i = 0; i < 500; ++i) {
    const double w = uw(rng), e = ue(rng);
    CHECK(std::abs(ig::log_f(w, e) - std::log(ig::f_eps(w, e))) < 1e-10);
    const double h = 1e-5;
    const double dw = (ig::log_f(w + h, e) - ig::log_f(w - h, e)) / (2 * h);
    CHECK(std::abs(ig::dlog_f_domega(w, e) - dw) < 1e-6 * std::max(1.0, std::abs(dw)));
    CHECK(std::abs(ig::dlog_f_domega_over_sin(w, e) - ig::dlog_f_domega(w, e) / std::sin(w)) <
          1e-8 * std::max(1.0, std::abs(dw / std::sin(w))));
    const double he = 1e-6 * e;
    const double de = (ig::log_f(w, e + he) - ig::log_f(w, e - he)) / (2 * he);
    CHECK(std::abs(ig::dlog_f_deps(w, e) - de) < 1e-5 * std::max(1.0, std::abs(de)));
  }
  // Gaussian limit of the ratio: d log f / d omega ~ -omega / (2 eps).
  CHECK(std::abs(ig::dlog_f_domega_over_sin(0.0, 0.01) + 1.0 / 0.02) / (1.0 / 0.02) < 0.02);
}

TEST_CASE("angle CDF tables") {
  const auto big = ig::build_cdf(10.0);
  CHECK(big.cdf.front() == 0.0);
  CHECK(big.cdf.back() == 1.0);
  CHECK(std::abs(big.raw_mass - 1.0) < 1e-3);
  for (std::size_t i = 0; i < big.grid.size(); ++i) CHECK(std::abs(big.cdf[i] - haar_angle_cdf(big.grid[i])) < 1e-3);
  for (double eps : {0.001, 0.005, 0.1, 1.0, 3.0}) {
    const auto t = ig::build_cdf(eps);
    CHECK(std::is_sorted(t.cdf.begin(), t.cdf.end()));
    CHECK(std::is_sorted(t.grid.begin(), t.grid.end()));
  }
  // Small scale: median of |N(0, 2 eps I_3)| is sigma * sqrt(chi2_3 median) with chi2_3 median 2.36597.
  const double eps = 0.005;
  const double median_ref = std::sqrt(2 * eps) * std::sqrt(2.365973884375338);
  CHECK(std::abs(ig::build_cdf(eps).quantile(0.5) - median_ref) / median_ref < 0.01);
  CHECK_THROWS_AS(ig::build_cdf(1.0, 10), Error);
  CHECK(ig::cached_cdf(0.3) == ig::cached_cdf(0.3 * (1 + 1e-5)));
}

TEST_CASE("sampling limits and convolution") {
  Rng rng(2);
  const Rotationd mu = expm<double>(Tangentd(0.4, -1.0, 2.0));
  // Concentration.
  double mean_angle = 0.0;
  const double eps = 1e-3;
  for (int i = 0; i < 2000; ++i) mean_angle += geodesic_angle(mu, ig::sample({mu, eps}, rng)) / 2000;
  // Mean of a chi_3 scaled by sigma = sqrt(2 eps): sigma * 2 sqrt(2 / pi).
  const double chi_mean = std::sqrt(2 * eps) * 2 * std::sqrt(2 / kPi);
  CHECK(std::abs(mean_angle - chi_mean) < 3 * std::sqrt(2 * eps) * 0.6 / std::sqrt(2000.0));

  // Semigroup on angles, including the (0.1, 0.1) and (1, 1) pairs.
  for (auto [e1, e2] : {std::pair{0.1, 0.1}, std::pair{1.0, 1.0}}) {
    std::vector<double> a, b;
    for (int i = 0; i < 50000; ++i) {
      a.push_back(rotation_angle(ig::sample({Rotationd::identity(), e1}, rng) * ig::sample({Rotationd::identity(), e2}, rng)));
      b.push_back(rotation_angle(ig::sample({Rotationd::identity(), e1 + e2}, rng)));
    }
    CHECK(stats::ks_2samp(a, b).p_value > 0.01);
  }
}

TEST_CASE("log density") {
  CHECK(std::abs(ig::log_density(Rotationd::identity(), {Rotationd::identity(), 20.0})) < 1e-6);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Rotationd q = sample_uniform<double>(rng), x = sample_uniform<double>(rng), mu = sample_uniform<double>(rng);
    CHECK(std::abs(ig::log_density(q * x, {q * mu, 0.4}) - ig::log_density(x, {mu, 0.4})) < 1e-8);
  }
  // Importance-sampling normalization against Haar.
  for (double e : {0.2, 1.0}) {
    double s = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) s += std::exp(ig::log_density(sample_uniform<double>(rng), {Rotationd::identity(), e}));
    CHECK(std::abs(s / n - 1.0) < 0.02);
  }
}

TEST_CASE("score") {
  CHECK(ig::score(Rotationd::identity(), {Rotationd::identity(), 0.3}).norm() == 0.0);
  CHECK_THROWS_AS(ig::score(expm<double>(Tangentd(kPi - 1e-6, 0, 0)), {Rotationd::identity(), 0.3}), Error);
  Rng rng(4);
  std::uniform_real_distribution<double> ue(0.05, 2.0), uw(0.1, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Rotationd mu = sample_uniform<double>(rng);
    const double e = ue(rng);
    const Rotationd x = mu * expm<double>(Tangentd(sample_unit_vector<double>(rng) * uw(rng)));
    const Tangentd s = ig::score(x, {mu, e});
    const double h = 1e-5;
    Tangentd fd;
    for (int k = 0; k < 3; ++k) {
      const Tangentd d = Tangentd::Unit(k) * h;
      fd(k) = (ig::log_density(x * expm(d), {mu, e}) - ig::log_density(x * expm<double>(Tangentd(-d)), {mu, e})) / (2 * h);
    }
    worst = std::max(worst, (s - fd).norm() / std::max(fd.norm(), 1e-3));
  }
  CHECK(worst < 1e-4);
  // Small-scale Gaussian limit: score ~ -v / (2 eps).
  const Tangentd v(0.01, -0.02, 0.015);
  const Tangentd s = ig::score(expm(v), {Rotationd::identity(), 0.005});
  CHECK((s + v / 0.01).norm() / (v / 0.01).norm() < 0.02);
}

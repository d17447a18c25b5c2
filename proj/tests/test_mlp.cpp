#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "so3diff/mlp.hpp"

using namespace testing;
using namespace so3diff::nn;

namespace {

double total_loss(const NetParams<double>& p, const Matrix<double>& x, const Matrix<double>& w) {
  return (forward_batch(p, x).array() * w.array()).sum();
}

}  // namespace

TEST_CASE("initialisation") {
  Rng a(7), b(7);
  const auto p = mlp_init<double>({12, 256, 3}, a);
  CHECK(p == mlp_init<double>({12, 256, 3}, b));
  CHECK(p.weights[0].rows() == 256);
  CHECK(p.weights[0].cols() == 12);
  CHECK(p.weights[1].rows() == 3);
  CHECK(forward(p, Vector<double>(Vector<double>::Zero(12))).cwiseAbs().maxCoeff() == 0.0);
  CHECK(forward(p, Vector<double>(Vector<double>::Ones(12))).size() == 3);
  CHECK_THROWS_AS(forward(p, Vector<double>(Vector<double>::Zero(5))), Error);
  CHECK_THROWS_AS(mlp_init<double>({4}, a), Error);
}

TEST_CASE("forward by hand") {
  NetParams<double> p;
  p.widths = {2, 2, 1};
  p.weights = {Matrix<double>::Identity(2, 2), Matrix<double>::Ones(1, 2)};
  p.biases = {Vector<double>::Zero(2), Vector<double>::Constant(1, 0.5)};
  Vector<double> x(2);
  x << 3.0, -1.0;
  // Hidden: (3, -0.01); output 3 - 0.01 + 0.5.
  CHECK(std::abs(forward(p, x)(0) - 3.49) < 1e-15);
}

TEST_CASE("Lipschitz bound") {
  Rng rng(1);
  const auto p = mlp_init<double>({6, 32, 32, 2}, rng);
  double lip = 1.0;
  for (const auto& w : p.weights) lip *= w.operatorNorm();
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    Vector<double> x(6), d(6);
    for (int k = 0; k < 6; ++k) {
      x(k) = n(rng);
      d(k) = 1e-3 * n(rng);
    }
    CHECK((forward(p, Vector<double>(x + d)) - forward(p, x)).norm() <= lip * d.norm() * (1 + 1e-12));
  }
}

TEST_CASE("backward matches finite differences") {
  Rng rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    auto p = mlp_init<double>({4, 8, 3}, rng);
    for (auto& b : p.biases) b = b.unaryExpr([&](double) { return 0.1 * n(rng); });
    Matrix<double> x(4, 2), w(3, 2);
    for (int k = 0; k < 8; ++k) x(k % 4, k / 4) = n(rng);
    for (int k = 0; k < 6; ++k) w(k % 3, k / 3) = n(rng);
    Tape<double> tape;
    forward_batch(p, x, &tape);
    const auto bw = backward_batch(p, tape, w);
    const double h = 1e-5;
    for (std::size_t l = 0; l < p.n_layers(); ++l) {
      for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
        auto q = p;
        q.weights[l].data()[i] += h;
        auto r = p;
        r.weights[l].data()[i] -= h;
        const double fd = (total_loss(q, x, w) - total_loss(r, x, w)) / (2 * h);
        CHECK(std::abs(bw.grads.weights[l].data()[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
      for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
        auto q = p;
        q.biases[l](i) += h;
        auto r = p;
        r.biases[l](i) -= h;
        const double fd = (total_loss(q, x, w) - total_loss(r, x, w)) / (2 * h);
        CHECK(std::abs(bw.grads.biases[l](i) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix<double> xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double fd = (total_loss(p, xp, w) - total_loss(p, xm, w)) / (2 * h);
      CHECK(std::abs(bw.input_grad.data()[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("trivial gradients") {
  Rng rng(3);
  const auto p = mlp_init<double>({4, 8, 3}, rng);
  const Vector<double> x = Vector<double>::Ones(4);
  const auto zero = backward(p, x, Vector<double>(Vector<double>::Zero(3)));
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    CHECK(zero.grads.weights[l].cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.grads.biases[l].cwiseAbs().maxCoeff() == 0.0);
  }
  const auto ones = backward(p, x, Vector<double>(Vector<double>::Ones(3)));
  CHECK(ones.grads.biases.back() == Vector<double>::Ones(3));
}

TEST_CASE("Adam") {
  NetParams<double> p;
  p.widths = {3, 2};
  p.weights = {Matrix<double>::Constant(2, 3, 1.0)};
  p.biases = {Vector<double>::Constant(2, -2.0)};
  auto s = adam_init(p, 1e-2);
  CHECK(s.beta1 == 0.90);
  CHECK(s.beta2 == 0.95);
  CHECK(adam_init(p).lr == 1e-4);
  double prev = 1e300;
  for (int i = 0; i < 100; ++i) {
    auto g = p;
    g *= 2.0;  // gradient of |w|^2
    adam_step(p, g, s);
    const double loss = p.weights[0].squaredNorm() + p.biases[0].squaredNorm();
    CHECK(loss < prev);
    prev = loss;
  }
  adam_step(p, p.zeros_like(), s);
  CHECK(s.step == 101);
  // Zero gradient still moves by the decayed first moment; a fresh state does not move at all.
  auto fresh = adam_init(p, 1e-2);
  auto q = p;
  adam_step(q, q.zeros_like(), fresh);
  CHECK(q == p);
  CHECK(fresh.step == 1);

  // First step is lr * sign(g) regardless of scale (up to epsilon_adam).
  for (double scale : {1e-6, 1.0, 1e6}) {
    auto r = p;
    auto st = adam_init(r, 1e-3);
    auto g = r.zeros_like();
    g.weights[0](0, 0) = scale;
    g.weights[0](1, 2) = -scale;
    adam_step(r, g, st);
    CHECK(std::abs((p.weights[0](0, 0) - r.weights[0](0, 0)) - 1e-3) < 1.1e-5);
    CHECK(std::abs((r.weights[0](1, 2) - p.weights[0](1, 2)) - 1e-3) < 1.1e-5);
  }
}

TEST_CASE("features") {
  const auto f = featurize(Rotationd::identity(), 0.5);
  CHECK(f.size() == 10);
  Eigen::VectorXd ref(10);
  ref << 1, 0, 0, 0, 1, 0, 0, 0, 1, std::log(0.5);
  CHECK(f == ref);
  CHECK(featurize(Rotationd::identity(), 0.5, Eigen::VectorXd(Eigen::VectorXd::Ones(4))).size() == 14);
  const Rotationd a = expm<double>(Tangentd(0, 0, kPi - 1e-7)), b = expm<double>(Tangentd(0, 0, -kPi + 1e-7));
  CHECK((featurize(a, 1.0) - featurize(b, 1.0)).norm() < 1e-6);
  CHECK_THROWS_AS(featurize(a, 0.0), Error);
}

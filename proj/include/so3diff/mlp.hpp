#pragma once

// Fixed-topology feed-forward network: affine layers with leaky ReLU on the
// hidden layers and a linear output, reverse-mode gradients and Adam.
// Batches are stored one sample per column.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "so3diff/error.hpp"
#include "so3diff/so3.hpp"

namespace so3diff::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation : std::uint32_t { LeakyRelu = 0 };

inline constexpr double kLeakySlope = 0.01;

template <typename Scalar>
struct NetParams {
  std::vector<int> widths;
  Activation activation = Activation::LeakyRelu;
  std::vector<Matrix<Scalar>> weights;  // layer l: widths[l+1] x widths[l]
  std::vector<Vector<Scalar>> biases;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  std::size_t n_layers() const { return weights.size(); }

  NetParams zeros_like() const {
    NetParams z{widths, activation, {}, {}};
    for (std::size_t l = 0; l < weights.size(); ++l) {
      z.weights.push_back(Matrix<Scalar>::Zero(weights[l].rows(), weights[l].cols()));
      z.biases.push_back(Vector<Scalar>::Zero(biases[l].size()));
    }
    return z;
  }

  std::size_t n_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  NetParams& operator+=(const NetParams& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }

  NetParams& operator*=(Scalar s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }

  bool operator==(const NetParams& o) const {
    if (widths != o.widths || activation != o.activation) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

/// He-style fan-in scaled uniform weights, zero biases.
template <typename Scalar, typename Rng>
NetParams<Scalar> mlp_init(const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw Error(ErrorCode::ShapeMismatch, "network needs at least input and output widths");
  for (int w : widths) {
    if (w < 1) throw Error(ErrorCode::ShapeMismatch, "layer widths must be positive");
  }
  NetParams<Scalar> p;
  p.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Scalar bound = std::sqrt(Scalar(6) / Scalar(widths[l]));
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    Matrix<Scalar> w(widths[l + 1], widths[l]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector<Scalar>::Zero(widths[l + 1]));
  }
  return p;
}

/// Activations saved by the forward pass for backward.
template <typename Scalar>
struct Tape {
  std::vector<Matrix<Scalar>> inputs;  // input to layer l
  std::vector<Matrix<Scalar>> pre;     // pre-activation of hidden layer l
};

template <typename Scalar>
Matrix<Scalar> forward_batch(const NetParams<Scalar>& p, const Matrix<Scalar>& x, Tape<Scalar>* tape = nullptr) {
  if (x.rows() != p.input_dim()) throw Error(ErrorCode::ShapeMismatch, "input dimension does not match the network");
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix<Scalar> a = x;
  const std::size_t n = p.n_layers();
  for (std::size_t l = 0; l < n; ++l) {
    Matrix<Scalar> z = p.weights[l] * a;
    z.colwise() += p.biases[l];
    if (tape) tape->inputs.push_back(std::move(a));
    if (l + 1 == n) return z;
    if (tape) tape->pre.push_back(z);
    a = z.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : Scalar(kLeakySlope) * v; });
  }
  return a;
}

template <typename Scalar>
Vector<Scalar> forward(const NetParams<Scalar>& p, const Vector<Scalar>& input) {
  return forward_batch<Scalar>(p, input).col(0);
}

template <typename Scalar>
struct Backward {
  NetParams<Scalar> grads;
  Matrix<Scalar> input_grad;
};

/// Exact reverse-mode gradients given dL/d(output) for every sample column.
template <typename Scalar>
Backward<Scalar> backward_batch(const NetParams<Scalar>& p, const Tape<Scalar>& tape, const Matrix<Scalar>& upstream) {
  const std::size_t n = p.n_layers();
  if (tape.inputs.size() != n || upstream.rows() != p.output_dim() || upstream.cols() != tape.inputs.front().cols()) {
    throw Error(ErrorCode::ShapeMismatch, "upstream gradient does not match the recorded forward pass");
  }
  Backward<Scalar> out{p.zeros_like(), {}};
  Matrix<Scalar> delta = upstream;
  for (std::size_t l = n; l-- > 0;) {
    out.grads.weights[l].noalias() = delta * tape.inputs[l].transpose();
    out.grads.biases[l] = delta.rowwise().sum();
    Matrix<Scalar> da = p.weights[l].transpose() * delta;
    if (l == 0) {
      out.input_grad = std::move(da);
      break;
    }
    const Matrix<Scalar>& z = tape.pre[l - 1];
    delta = da.cwiseProduct(z.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(kLeakySlope); }));
  }
  return out;
}

template <typename Scalar>
Backward<Scalar> backward(const NetParams<Scalar>& p, const Vector<Scalar>& input, const Vector<Scalar>& upstream) {
  Tape<Scalar> tape;
  forward_batch<Scalar>(p, input, &tape);
  return backward_batch<Scalar>(p, tape, upstream);
}

template <typename Scalar>
struct AdamState {
  NetParams<Scalar> m;
  NetParams<Scalar> v;
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.90;
  double beta2 = 0.95;
  double epsilon = 1e-8;
};

template <typename Scalar>
AdamState<Scalar> adam_init(const NetParams<Scalar>& p, double lr = 1e-4, double beta1 = 0.90, double beta2 = 0.95,
                            double epsilon = 1e-8) {
  return {p.zeros_like(), p.zeros_like(), 0, lr, beta1, beta2, epsilon};
}

/// Bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(NetParams<Scalar>& p, const NetParams<Scalar>& g, AdamState<Scalar>& s) {
  if (g.widths != p.widths || s.m.widths != p.widths) throw Error(ErrorCode::ShapeMismatch, "Adam shapes do not match");
  ++s.step;
  const Scalar b1 = Scalar(s.beta1), b2 = Scalar(s.beta2);
  const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(s.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(s.step));
  const Scalar lr = Scalar(s.lr), eps = Scalar(s.epsilon);
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    update(p.weights[l], g.weights[l], s.m.weights[l], s.v.weights[l]);
    update(p.biases[l], g.biases[l], s.m.biases[l], s.v.biases[l]);
  }
}

// ---------------------------------------------------------------------------
// Network inputs: the 9 matrix entries (row-major), then scalar conditioning
// features, then an optional context vector.

inline constexpr int kRotationFeatures = 9;

template <typename Scalar, typename Derived>
void write_rotation_features(const Rotation<Scalar>& x, Eigen::MatrixBase<Derived>&& out) {
  const Matrix3<Scalar>& m = x.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out(3 * r + c) = m(r, c);
  }
}

/// [9 matrix entries, log(noise_level), context...]
inline Eigen::VectorXd featurize(const Rotationd& x, double noise_level,
                                 const std::optional<Eigen::VectorXd>& context = std::nullopt) {
  if (!(noise_level > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise level must be positive");
  const Eigen::Index ctx = context ? context->size() : 0;
  Eigen::VectorXd f(kRotationFeatures + 1 + ctx);
  write_rotation_features(x, f.head<kRotationFeatures>());
  f(kRotationFeatures) = std::log(noise_level);
  if (ctx) f.tail(ctx) = *context;
  return f;
}

}  // namespace so3diff::nn

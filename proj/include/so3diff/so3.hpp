#pragma once

// Rotation-group arithmetic: hat/vee, exp/log maps, quaternions, the 6D
// continuous representation and Haar-uniform sampling. Everything here is
// header-only and templated on the scalar type; `double` is what the rest of
// the library instantiates.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "so3diff/error.hpp"

namespace so3diff {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Coordinates of an element of so(3) in the basis {hat(e_x), hat(e_y), hat(e_z)}.
template <typename Scalar>
using Tangent = Vector3<Scalar>;

namespace tolerance {
inline constexpr double kConstruction = 1e-9;
inline constexpr double kRoundTrip = 1e-8;
inline constexpr double kQuaternionNorm = 1e-6;
inline constexpr double kSkew = 1e-8;
inline constexpr double kFrame = 1e-12;
}  // namespace tolerance

template <typename Scalar>
Matrix3<Scalar> hat(const Tangent<Scalar>& v) {
  Matrix3<Scalar> s;
  s << Scalar(0), -v.z(), v.y(),
       v.z(), Scalar(0), -v.x(),
       -v.y(), v.x(), Scalar(0);
  return s;
}

template <typename Scalar>
Tangent<Scalar> vee(const Matrix3<Scalar>& s, double tol = tolerance::kSkew) {
  const Scalar residual = (s + s.transpose()).cwiseAbs().maxCoeff();
  if (!(residual <= Scalar(tol))) {
    throw Error(ErrorCode::NotSkew, "symmetric residual exceeds tolerance");
  }
  return Tangent<Scalar>(s(2, 1), s(0, 2), s(1, 0));
}

/// A 3x3 orthogonal matrix with unit determinant. Construction from an
/// arbitrary matrix is checked; group operations produce rotations directly.
template <typename Scalar>
class Rotation {
 public:
  Rotation() : m_(Matrix3<Scalar>::Identity()) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Matrix3<Scalar>& m, double tol = tolerance::kConstruction) {
    if (!m.allFinite()) throw Error(ErrorCode::NotRotation, "non-finite entries");
    const Scalar ortho = (m.transpose() * m - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
    const Scalar det = m.determinant();
    if (!(ortho <= Scalar(tol)) || !(std::abs(det - Scalar(1)) <= Scalar(tol))) {
      throw Error(ErrorCode::NotRotation, "matrix is not a proper rotation");
    }
    return Rotation(m, Unchecked{});
  }

  /// Caller guarantees the invariants (results of exp, products, decoders).
  static Rotation from_matrix_unchecked(const Matrix3<Scalar>& m) { return Rotation(m, Unchecked{}); }

  const Matrix3<Scalar>& matrix() const { return m_; }
  Scalar operator()(int r, int c) const { return m_(r, c); }

  Rotation inverse() const { return Rotation(m_.transpose(), Unchecked{}); }

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    return Rotation(a.m_ * b.m_, Unchecked{});
  }
  friend Vector3<Scalar> operator*(const Rotation& a, const Vector3<Scalar>& v) { return a.m_ * v; }

  bool operator==(const Rotation& o) const { return m_ == o.m_; }

  template <typename Other>
  Rotation<Other> cast() const {
    return Rotation<Other>::from_matrix_unchecked(m_.template cast<Other>());
  }

 private:
  struct Unchecked {};
  Rotation(const Matrix3<Scalar>& m, Unchecked) : m_(m) {}

  Matrix3<Scalar> m_;
};

using Rotationd = Rotation<double>;
using Tangentd = Tangent<double>;

template <typename Scalar>
Rotation<Scalar> compose(const Rotation<Scalar>& a, const Rotation<Scalar>& b) {
  return a * b;
}

template <typename Scalar>
Rotation<Scalar> inverse(const Rotation<Scalar>& r) {
  return r.inverse();
}

/// Rodrigues formula.
template <typename Scalar>
Rotation<Scalar> expm(const Tangent<Scalar>& v) {
  using std::cos;
  using std::sin;
  const Scalar theta2 = v.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  const Matrix3<Scalar> k = hat(v);
  Scalar a, b;  // sin(t)/t, (1 - cos(t))/t^2
  if (theta < Scalar(1e-4)) {
    a = Scalar(1) - theta2 / Scalar(6);
    b = Scalar(0.5) - theta2 / Scalar(24);
  } else {
    a = sin(theta) / theta;
    b = (Scalar(1) - cos(theta)) / theta2;
  }
  return Rotation<Scalar>::from_matrix_unchecked(Matrix3<Scalar>::Identity() + a * k + b * k * k);
}

/// Rotation angle in [0, pi], from atan2 of the skew and symmetric parts so it
/// stays accurate near both 0 and pi.
template <typename Scalar>
Scalar rotation_angle(const Rotation<Scalar>& r) {
  const Matrix3<Scalar>& m = r.matrix();
  const Vector3<Scalar> s(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const Scalar sin_t = Scalar(0.5) * s.norm();
  const Scalar cos_t = Scalar(0.5) * (m.trace() - Scalar(1));
  return std::atan2(sin_t, cos_t);
}

/// Principal-branch logarithm, |result| in [0, pi].
template <typename Scalar>
Tangent<Scalar> logm(const Rotation<Scalar>& r) {
  const Matrix3<Scalar>& m = r.matrix();
  const Vector3<Scalar> s(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const Scalar theta = rotation_angle(r);
  if (theta < Scalar(1e-4)) {
    return Scalar(0.5) * (Scalar(1) + theta * theta / Scalar(6)) * s;
  }
  if (theta > Scalar(std::numbers::pi - 1e-3)) {
    // (R + R^T)/2 = cos(t) I + (1 - cos(t)) n n^T; take the column with the
    // largest diagonal of n n^T.
    const Scalar c = std::cos(theta);
    const Matrix3<Scalar> nn =
        (Scalar(0.5) * (m + m.transpose()) - c * Matrix3<Scalar>::Identity()) / (Scalar(1) - c);
    int k = 0;
    nn.diagonal().maxCoeff(&k);
    Vector3<Scalar> n = nn.col(k) / std::sqrt(nn(k, k));
    n.normalize();
    if (s.dot(n) < Scalar(0)) n = -n;
    // At exactly pi the skew part vanishes; fix the sign by the largest component.
    if (s.norm() < Scalar(1e-12)) {
      int j = 0;
      n.cwiseAbs().maxCoeff(&j);
      if (n(j) < Scalar(0)) n = -n;
    }
    return theta * n;
  }
  return theta / (Scalar(2) * std::sin(theta)) * s;
}

/// Bi-invariant distance arccos((tr(R1^T R2) - 1)/2), in [0, pi].
template <typename Scalar>
Scalar geodesic_angle(const Rotation<Scalar>& a, const Rotation<Scalar>& b) {
  return rotation_angle(a.inverse() * b);
}

// ---------------------------------------------------------------------------
// Quaternions (Hamilton convention, q = a + b i + c j + d k).

template <typename Scalar>
struct Quaternion {
  Scalar a{1}, b{0}, c{0}, d{0};

  Vector3<Scalar> vec() const { return {b, c, d}; }
  Scalar norm() const { return std::sqrt(a * a + b * b + c * c + d * d); }
  Quaternion operator-() const { return {-a, -b, -c, -d}; }
  bool operator==(const Quaternion&) const = default;
};

using Quaterniond = Quaternion<double>;

template <typename Scalar>
Quaternion<Scalar> quat_product(const Quaternion<Scalar>& p, const Quaternion<Scalar>& q) {
  return {p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
          p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
          p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
          p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a};
}

template <typename Scalar>
Quaternion<Scalar> quat_conj(const Quaternion<Scalar>& q) {
  return {q.a, -q.b, -q.c, -q.d};
}

/// Shepperd's method; returns the hemisphere with a >= 0.
template <typename Scalar>
Quaternion<Scalar> to_quaternion(const Rotation<Scalar>& r) {
  const Matrix3<Scalar>& m = r.matrix();
  const Scalar tr = m.trace();
  Quaternion<Scalar> q;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + tr) * Scalar(2);
    q = {Scalar(0.25) * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + m(0, 0) - m(1, 1) - m(2, 2)) * Scalar(2);
    q = {(m(2, 1) - m(1, 2)) / s, Scalar(0.25) * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
  } else if (m(1, 1) >= m(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + m(1, 1) - m(0, 0) - m(2, 2)) * Scalar(2);
    q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, Scalar(0.25) * s, (m(1, 2) + m(2, 1)) / s};
  } else {
    const Scalar s = std::sqrt(Scalar(1) + m(2, 2) - m(0, 0) - m(1, 1)) * Scalar(2);
    q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, Scalar(0.25) * s};
  }
  const Scalar n = q.norm();
  q = {q.a / n, q.b / n, q.c / n, q.d / n};
  if (q.a < Scalar(0)) q = -q;
  return q;
}

template <typename Scalar>
Rotation<Scalar> from_quaternion(const Quaternion<Scalar>& q, double tol = tolerance::kQuaternionNorm) {
  const Scalar n = q.norm();
  if (!(std::abs(n - Scalar(1)) <= Scalar(tol))) {
    throw Error(ErrorCode::NonUnitQuaternion, "quaternion norm deviates from 1");
  }
  const Scalar a = q.a / n, b = q.b / n, c = q.c / n, d = q.d / n;
  Matrix3<Scalar> m;
  m << 1 - 2 * (c * c + d * d), 2 * (b * c - a * d), 2 * (b * d + a * c),
       2 * (b * c + a * d), 1 - 2 * (b * b + d * d), 2 * (c * d - a * b),
       2 * (b * d - a * c), 2 * (c * d + a * b), 1 - 2 * (b * b + c * c);
  return Rotation<Scalar>::from_matrix_unchecked(m);
}

/// q^t = exp(t ln q). Not canonicalised: q and -q give different powers.
template <typename Scalar>
Quaternion<Scalar> quat_power(const Quaternion<Scalar>& q, Scalar t) {
  const Vector3<Scalar> v = q.vec();
  const Scalar s = v.norm();
  const Scalar half = std::atan2(s, q.a);  // half-angle in [0, pi]
  if (s < Scalar(1e-300)) {
    // Real quaternion (+1 or -1): ln(-1) has no unique axis; pick x.
    if (q.a >= Scalar(0)) return {Scalar(1), Scalar(0), Scalar(0), Scalar(0)};
    return {std::cos(t * half), std::sin(t * half), Scalar(0), Scalar(0)};
  }
  const Vector3<Scalar> axis = v / s;
  const Scalar sh = std::sin(t * half);
  return {std::cos(t * half), sh * axis.x(), sh * axis.y(), sh * axis.z()};
}

/// Quaternion-power contraction of x toward the identity, x^t.
template <typename Scalar>
Rotation<Scalar> rotation_power(const Rotation<Scalar>& x, Scalar t) {
  return from_quaternion(quat_power(to_quaternion(x), t));
}

/// Variance-preserving composition x^sqrt(alpha) * delta^sqrt(1 - alpha).
template <typename Scalar>
Rotation<Scalar> vp_compose(const Rotation<Scalar>& x, const Rotation<Scalar>& delta, Scalar alpha) {
  if (!(alpha > Scalar(0) && alpha <= Scalar(1))) {
    throw Error(ErrorCode::InvalidArgument, "vp_compose requires alpha in (0, 1]");
  }
  if (alpha == Scalar(1)) return x;
  const auto qx = quat_power(to_quaternion(x), std::sqrt(alpha));
  const auto qd = quat_power(to_quaternion(delta), std::sqrt(Scalar(1) - alpha));
  return from_quaternion(quat_product(qx, qd));
}

// ---------------------------------------------------------------------------
// 6D continuous representation: first two columns of an unconstrained frame.

template <typename Scalar>
struct SixD {
  Vector3<Scalar> u;
  Vector3<Scalar> w;
};

template <typename Scalar>
Rotation<Scalar> from_sixd(const SixD<Scalar>& s) {
  const Scalar nu = s.u.norm();
  if (!(nu > Scalar(tolerance::kFrame))) throw Error(ErrorCode::DegenerateFrame, "first vector vanishes");
  const Vector3<Scalar> c1 = s.u / nu;
  const Vector3<Scalar> a = s.w - c1.dot(s.w) * c1;
  const Scalar na = a.norm();
  if (!(na > Scalar(tolerance::kFrame) * std::max(Scalar(1), s.w.norm()))) {
    throw Error(ErrorCode::DegenerateFrame, "second vector parallel to the first");
  }
  const Vector3<Scalar> c2 = a / na;
  Matrix3<Scalar> m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return Rotation<Scalar>::from_matrix_unchecked(m);
}

/// Pull a gradient dL/dR of the decoded matrix back to (dL/du, dL/dw).
template <typename Scalar>
SixD<Scalar> from_sixd_backward(const SixD<Scalar>& s, const Matrix3<Scalar>& grad_r) {
  const Scalar nu = s.u.norm();
  const Vector3<Scalar> c1 = s.u / nu;
  const Scalar c1w = c1.dot(s.w);
  const Vector3<Scalar> a = s.w - c1w * c1;
  const Scalar na = a.norm();
  const Vector3<Scalar> c2 = a / na;

  Vector3<Scalar> g1 = grad_r.col(0);
  Vector3<Scalar> g2 = grad_r.col(1);
  const Vector3<Scalar> g3 = grad_r.col(2);
  // c3 = c1 x c2
  g1 += c2.cross(g3);
  g2 += g3.cross(c1);
  // c2 = a / |a|
  const Vector3<Scalar> ga = (g2 - c2 * c2.dot(g2)) / na;
  // a = w - (c1.w) c1
  SixD<Scalar> out;
  out.w = ga - c1 * c1.dot(ga);
  g1 -= c1w * ga + c1.dot(ga) * s.w;
  // c1 = u / |u|
  out.u = (g1 - c1 * c1.dot(g1)) / nu;
  return out;
}

/// Right Jacobian of expm: expm(v + dv) ~= expm(v) expm(J_r(v) dv).
template <typename Scalar>
Matrix3<Scalar> right_jacobian(const Tangent<Scalar>& v) {
  const Scalar t2 = v.squaredNorm();
  const Scalar t = std::sqrt(t2);
  const Matrix3<Scalar> k = hat(v);
  Scalar a, b;  // (1 - cos t)/t^2, (t - sin t)/t^3
  if (t < Scalar(1e-4)) {
    a = Scalar(0.5) - t2 / Scalar(24);
    b = Scalar(1) / Scalar(6) - t2 / Scalar(120);
  } else {
    a = (Scalar(1) - std::cos(t)) / t2;
    b = (t - std::sin(t)) / (t2 * t);
  }
  return Matrix3<Scalar>::Identity() - a * k + b * k * k;
}

// ---------------------------------------------------------------------------
// Sampling.

/// Haar-uniform rotation from a normalised 4-vector of standard normals.
template <typename Scalar = double, typename Rng>
Rotation<Scalar> sample_uniform(Rng& rng) {
  std::normal_distribution<Scalar> normal;
  Quaternion<Scalar> q;
  Scalar n;
  do {
    q = {normal(rng), normal(rng), normal(rng), normal(rng)};
    n = q.norm();
  } while (n < Scalar(1e-12));
  q = {q.a / n, q.b / n, q.c / n, q.d / n};
  return from_quaternion(q);
}

/// Uniform point on the unit sphere S^2.
template <typename Scalar = double, typename Rng>
Vector3<Scalar> sample_unit_vector(Rng& rng) {
  std::normal_distribution<Scalar> normal;
  Vector3<Scalar> v;
  Scalar n;
  do {
    v = {normal(rng), normal(rng), normal(rng)};
    n = v.norm();
  } while (n < Scalar(1e-12));
  return v / n;
}

// ---------------------------------------------------------------------------
// Canonical-axis decomposition used for targets and plotting: R = Q_a Rz(tilt)
// where a = R e_z and Q_a is the minimal rotation taking e_z to a.

template <typename Scalar>
struct CanonicalAxis {
  Vector3<Scalar> axis;
  Scalar tilt;  // in (-pi, pi]
};

template <typename Scalar>
Matrix3<Scalar> minimal_rotation_from_z(const Vector3<Scalar>& a) {
  const Vector3<Scalar> k(-a.y(), a.x(), Scalar(0));  // e_z x a
  const Scalar c = a.z();
  const Matrix3<Scalar> kh = hat(k);
  if (c < Scalar(-1) + Scalar(1e-12)) {
    // a = -e_z: half turn about x.
    Matrix3<Scalar> m = Matrix3<Scalar>::Identity();
    m(1, 1) = m(2, 2) = Scalar(-1);
    return m;
  }
  return Matrix3<Scalar>::Identity() + kh + kh * kh / (Scalar(1) + c);
}

template <typename Scalar>
CanonicalAxis<Scalar> canonical_axis(const Rotation<Scalar>& r) {
  const Vector3<Scalar> a = r.matrix().col(2);
  const Matrix3<Scalar> m = minimal_rotation_from_z(a).transpose() * r.matrix();
  return {a, std::atan2(m(1, 0), m(0, 0))};
}

template <typename Scalar>
Rotation<Scalar> from_canonical_axis(const Vector3<Scalar>& axis, Scalar tilt) {
  const Vector3<Scalar> z(Scalar(0), Scalar(0), tilt);
  return Rotation<Scalar>::from_matrix_unchecked(minimal_rotation_from_z<Scalar>(axis.normalized()) *
                                                 expm<Scalar>(z).matrix());
}

}  // namespace so3diff

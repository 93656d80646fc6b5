#pragma once

/**
 * @file
 * @brief Matrix-group primitives for SO(3): hat/vee, exp/log, brackets,
 * coadjoint action and the momentum maps of the left and right actions.
 *
 * Covectors are represented as matrices of the same shape as the vectors
 * they act on, paired with the Frobenius trace pairing <a, b> = tr(a^T b).
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "unreduce/error.hpp"

namespace unreduce {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// 3x3 antisymmetric matrix, an element of so(3).
class Antisym3 {
 public:
  static constexpr double kTolerance = 1e-12;

  Antisym3() : m_(Mat3::Zero()) {}

  /// Throws InvalidArgument unless ||m + m^T||_F <= 1e-12.
  explicit Antisym3(const Mat3& m) : m_(m) {
    if (!m.allFinite() || (m + m.transpose()).norm() > kTolerance) {
      throw Error(Errc::InvalidArgument, "matrix is not antisymmetric");
    }
  }

  /// Antisymmetric part of an arbitrary matrix.
  static Antisym3 skew_part(const Mat3& m) {
    Antisym3 a;
    a.m_ = 0.5 * (m - m.transpose());
    return a;
  }

  const Mat3& matrix() const { return m_; }
  operator const Mat3&() const { return m_; }  // NOLINT(google-explicit-constructor)

 private:
  Mat3 m_;
};

/// Element of SO(3), validated at construction.
class RotationMatrix {
 public:
  static constexpr double kTolerance = 1e-10;

  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Throws InvalidArgument unless ||m^T m - I||_F and |det m - 1| are within 1e-10.
  explicit RotationMatrix(const Mat3& m) : m_(m) {
    if (!m.allFinite() || (m.transpose() * m - Mat3::Identity()).norm() > kTolerance ||
        std::abs(m.determinant() - 1.0) > kTolerance) {
      throw Error(Errc::InvalidArgument, "matrix is not a rotation");
    }
  }

  /// Wraps integrator output that is orthogonal only up to truncation error.
  static RotationMatrix unchecked(const Mat3& m) {
    RotationMatrix r;
    r.m_ = m;
    return r;
  }

  const Mat3& matrix() const { return m_; }
  operator const Mat3&() const { return m_; }  // NOLINT(google-explicit-constructor)

  RotationMatrix transpose() const { return unchecked(m_.transpose()); }
  RotationMatrix operator*(const RotationMatrix& other) const { return unchecked(m_ * other.m_); }

 private:
  Mat3 m_;
};

inline Antisym3 hat(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<  0.0,  -v.z(),  v.y(),
        v.z(),  0.0,  -v.x(),
       -v.y(),  v.x(),  0.0;
  // clang-format on
  return Antisym3(m);
}

/// Reads the antisymmetric part, so vee(m) is well defined for any 3x3 matrix.
inline Vec3 vee(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

/// Frobenius trace pairing tr(a^T b).
template <class A, class B>
double pairing(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.cwiseProduct(b).sum();
}

/// Matrix commutator ab - ba.
template <class Derived>
typename Derived::PlainObject bracket(const Eigen::MatrixBase<Derived>& a,
                                      const Eigen::MatrixBase<Derived>& b) {
  return a * b - b * a;
}

/// Coadjoint action for ad_xi(g) = [xi, g] under the trace pairing:
/// <ad_star(xi, mu), g> = <mu, [xi, g]> for every square g.
template <class Derived>
typename Derived::PlainObject ad_star(const Eigen::MatrixBase<Derived>& xi,
                                      const Eigen::MatrixBase<Derived>& mu) {
  return xi.transpose() * mu - mu * xi.transpose();
}

/// Rodrigues formula with a Taylor branch near the identity.
inline RotationMatrix exp_so3(const Antisym3& omega) {
  const Mat3& w = omega.matrix();
  const double theta = vee(w).norm();
  const Mat3 w2 = w * w;
  double a = 0.0;
  double b = 0.0;
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return RotationMatrix::unchecked(Mat3::Identity() + a * w + b * w2);
}

/// Principal logarithm. Throws AngleNearPi when trace(R) <= -1 + 1e-9, where
/// the rotation axis is no longer determined by R.
inline Antisym3 log_so3(const RotationMatrix& rotation) {
  const Mat3& r = rotation.matrix();
  const double tr = r.trace();
  if (!(tr > -1.0 + 1e-9)) {
    throw Error(Errc::AngleNearPi, "rotation angle within chart tolerance of pi");
  }
  const double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const Vec3 sv = vee(r);  // sin(theta) * axis
  const double s = sv.norm();
  const double theta = std::atan2(s, c);

  if (theta < 1e-4) {
    const double t2 = theta * theta;
    return hat((1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0) * sv);
  }
  if (c > -0.9) {
    return hat(theta / s * sv);
  }
  // Near pi the symmetric part carries the axis more accurately than vee(R).
  const Mat3 sym = 0.5 * (r + r.transpose()) - c * Mat3::Identity();
  Eigen::Index k = 0;
  sym.diagonal().maxCoeff(&k);
  Vec3 axis = sym.col(k) / std::sqrt(sym(k, k) * (1.0 - c));
  axis.normalize();
  if (axis.dot(sv) < 0.0) axis = -axis;
  return hat(theta * axis);
}

/// Rotation angle in [0, pi], computed without the log chart.
inline double rotation_angle(const Mat3& r) {
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  return std::atan2(vee(r).norm(), c);
}

/// Generator of the right SO(2) action: w = -hat(e_z).
inline const Mat3& z_generator() {
  static const Mat3 w = (Mat3() << 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0).finished();
  return w;
}

/// Right-handed rotation about z by `angle`, i.e. exp(-angle * w).
inline RotationMatrix z_rotation(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 m;
  m << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return RotationMatrix::unchecked(m);
}

/// Momentum map of the left action Q -> gQ in the sign convention
/// <J, d> = <P, -d Q>, i.e. J = -1/2 (P Q^T - Q P^T).
inline Antisym3 momentum_left_so3(const Mat3& q, const Mat3& p) {
  return Antisym3::skew_part(-(p * q.transpose()));
}

/// Momentum map of the right SO(2) action about z: <P, Q w> = tr(P^T Q w).
inline double momentum_right_z(const Mat3& q, const Mat3& p) {
  return pairing(p, q * z_generator());
}

/// Momentum map of the full right SO(3) action Q -> Qh, in vee coordinates.
/// Its z component equals -momentum_right_z / 2.
inline Vec3 momentum_right_full(const Mat3& q, const Mat3& p) {
  return vee(q.transpose() * p);
}

}  // namespace unreduce

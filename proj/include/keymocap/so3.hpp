#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace keymocap {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Quaternion = Eigen::Quaternion<Scalar>;

template <typename Derived>
Matrix3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Matrix3<Scalar> m;
  m << Scalar(0), -v(2), v(1),
       v(2), Scalar(0), -v(0),
       -v(1), v(0), Scalar(0);
  return m;
}

/// Rotation vector (axis * angle, radians) to unit quaternion.
template <typename Derived>
Quaternion<typename Derived::Scalar> so3_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar angle2 = v.squaredNorm();
  const Scalar angle = sqrt(angle2);
  const Scalar half = angle / Scalar(2);
  Scalar k;  // sin(angle/2) / angle
  if (angle < Scalar(1e-4)) {
    k = Scalar(0.5) - angle2 / Scalar(48);
  } else {
    k = sin(half) / angle;
  }
  Quaternion<Scalar> q(cos(half), k * v(0), k * v(1), k * v(2));
  return q.normalized();
}

/// Unit quaternion to rotation vector with angle in [0, pi].
template <typename Scalar>
Vector3<Scalar> so3_log(const Quaternion<Scalar>& q_in) {
  using std::atan2;
  Quaternion<Scalar> q = q_in;
  if (q.w() < Scalar(0)) q.coeffs() = -q.coeffs();
  const Vector3<Scalar> xyz = q.vec();
  const Scalar s = xyz.norm();
  if (s < Scalar(1e-8)) {
    // 2 * atan2(s, w) / s -> 2 / w
    return xyz * (Scalar(2) / q.w());
  }
  const Scalar angle = Scalar(2) * atan2(s, q.w());
  return xyz * (angle / s);
}

/// Right Jacobian of SO(3): Exp(v + dv) ~= Exp(v) Exp(Jr(v) dv).
template <typename Derived>
Matrix3<typename Derived::Scalar> right_jacobian(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar a2 = v.squaredNorm();
  const Scalar a = sqrt(a2);
  Scalar c1, c2;
  if (a < Scalar(1e-4)) {
    c1 = Scalar(0.5) - a2 / Scalar(24);
    c2 = Scalar(1) / Scalar(6) - a2 / Scalar(120);
  } else {
    c1 = (Scalar(1) - cos(a)) / a2;
    c2 = (a - sin(a)) / (a2 * a);
  }
  const Matrix3<Scalar> k = skew(v);
  return Matrix3<Scalar>::Identity() - c1 * k + c2 * k * k;
}

/// Left Jacobian: Exp(v + dv) ~= Exp(Jl(v) dv) Exp(v).
template <typename Derived>
Matrix3<typename Derived::Scalar> left_jacobian(const Eigen::MatrixBase<Derived>& v) {
  return right_jacobian((-v).eval());
}

/// Inverse of the left Jacobian. Singular at angle = pi.
template <typename Derived>
Matrix3<typename Derived::Scalar> inverse_left_jacobian(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar a2 = v.squaredNorm();
  const Scalar a = sqrt(a2);
  Scalar c2;
  if (a < Scalar(1e-4)) {
    c2 = Scalar(1) / Scalar(12) + a2 / Scalar(720);
  } else {
    c2 = Scalar(1) / a2 - (Scalar(1) + cos(a)) / (Scalar(2) * a * sin(a));
  }
  const Matrix3<Scalar> k = skew(v);
  return Matrix3<Scalar>::Identity() - Scalar(0.5) * k + c2 * k * k;
}

/// Geodesic distance between two rotations, radians in [0, pi].
template <typename Scalar>
Scalar rotation_angle_between(const Quaternion<Scalar>& a, const Quaternion<Scalar>& b) {
  return so3_log(Quaternion<Scalar>(a.conjugate() * b)).norm();
}

}  // namespace keymocap

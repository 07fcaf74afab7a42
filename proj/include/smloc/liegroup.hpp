#pragma once

// SO(3) primitives and the rotation/translation pose type shared by the
// registration, filtering and simulation code. Rotations are stored as
// 3x3 matrices throughout.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace smloc {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kPi = std::numbers::pi;

/// Tolerance used for the orthonormality and antisymmetry checks.
inline constexpr double kGroupTolerance = 1e-9;

/// S(v): the matrix with S(v) * w == v.cross(w).
inline Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Inverse of skew(). Throws std::invalid_argument if the symmetric part of
/// the input exceeds kGroupTolerance (Frobenius norm).
inline Vector3 unskew(const Matrix3& xi) {
  const double sym = (0.5 * (xi + xi.transpose())).norm();
  if (!(sym <= kGroupTolerance)) {
    throw std::invalid_argument("unskew: matrix is not antisymmetric (|sym| = " +
                                std::to_string(sym) + ")");
  }
  return {0.5 * (xi(2, 1) - xi(1, 2)), 0.5 * (xi(0, 2) - xi(2, 0)),
          0.5 * (xi(1, 0) - xi(0, 1))};
}

/// pi(R) = (R - R^T) / 2. Defined for any 3x3 matrix; antisymmetric exactly.
inline Matrix3 project_pi(const Matrix3& R) {
  Matrix3 out;
  for (int i = 0; i < 3; ++i) {
    out(i, i) = 0.0;
    for (int j = i + 1; j < 3; ++j) {
      const double a = 0.5 * (R(i, j) - R(j, i));
      out(i, j) = a;
      out(j, i) = -a;
    }
  }
  return out;
}

/// Rodrigues exponential. Below 1e-7 rad the second-order series is used.
inline Matrix3 exp_so3(const Vector3& v) {
  const double theta = v.norm();
  const Matrix3 K = skew(v);
  if (theta < 1e-7) {
    return Matrix3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Matrix3::Identity() + a * K + b * K * K;
}

/// Principal logarithm as a rotation vector alpha * axis. Throws
/// std::domain_error when the rotation angle is within 1e-6 of pi, where
/// the axis extraction from R - R^T degenerates.
inline Vector3 log_so3(const Matrix3& R) {
  const double c = 0.5 * (R.trace() - 1.0);
  const Vector3 w{0.5 * (R(2, 1) - R(1, 2)), 0.5 * (R(0, 2) - R(2, 0)),
                  0.5 * (R(1, 0) - R(0, 1))};
  const double s = w.norm();
  const double alpha = std::atan2(s, c);
  if (alpha > kPi - 1e-6) {
    throw std::domain_error("log_so3: rotation angle too close to pi");
  }
  if (alpha < 1e-6) {
    // alpha / sin(alpha) = 1 + alpha^2 / 6 + O(alpha^4)
    return w * (1.0 + alpha * alpha / 6.0);
  }
  return w * (alpha / s);
}

/// Rotation about the world z axis.
inline Matrix3 rot_z(double yaw) { return exp_so3(Vector3{0.0, 0.0, yaw}); }

inline double orthonormality_error(const Matrix3& R) {
  return (R.transpose() * R - Matrix3::Identity()).norm();
}

inline bool is_rotation(const Matrix3& R, double tol = kGroupTolerance) {
  return orthonormality_error(R) <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

/// Closest rotation in the Frobenius sense (polar factor via SVD).
inline Matrix3 nearest_rotation(const Matrix3& M) {
  Eigen::JacobiSVD<Matrix3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 U = svd.matrixU();
  const Matrix3 V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

/// Re-projects onto SO(3) only once drift exceeds kGroupTolerance.
inline Matrix3 renormalize_if_drifted(const Matrix3& R) {
  return orthonormality_error(R) > kGroupTolerance ? nearest_rotation(R) : R;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

/// Z-Y-X (yaw, pitch, roll) Euler angles.
struct EulerZYX {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

inline EulerZYX euler_zyx(const Matrix3& R) {
  EulerZYX e;
  e.yaw = std::atan2(R(1, 0), R(0, 0));
  e.pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  e.roll = std::atan2(R(2, 1), R(2, 2));
  return e;
}

/// Rigid-body pose: world_point = R * body_point + p.
struct Pose {
  Matrix3 R = Matrix3::Identity();
  Vector3 p = Vector3::Zero();

  static Pose identity() { return {}; }

  Vector3 transform(const Vector3& body) const { return R * body + p; }
  Vector3 inverse_transform(const Vector3& world) const {
    return R.transpose() * (world - p);
  }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * p)}; }
  Pose operator*(const Pose& rhs) const {
    return {renormalize_if_drifted(R * rhs.R), R * rhs.p + p};
  }
};

/// Pose from a rotation vector and a translation.
inline Pose make_pose(const Vector3& rotation_vector, const Vector3& translation) {
  return {exp_so3(rotation_vector), translation};
}

/// Linear interpolation of position and geodesic interpolation of attitude.
inline Pose interpolate(const Pose& a, const Pose& b, double s) {
  const Vector3 dr = log_so3(a.R.transpose() * b.R);
  return {renormalize_if_drifted(a.R * exp_so3(s * dr)), a.p + s * (b.p - a.p)};
}

}  // namespace smloc

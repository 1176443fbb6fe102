// Copyright 2026 The tkaslam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tka {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Tangent of SE(3): rotation part (axis-angle, rad) then translation part (mm).
struct PoseTangent {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  static PoseTangent from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << rotation, translation;
    return v;
  }
};

/// Rigid transform x -> R x + t.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }

  RigidPose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  /// (this * other)(x) == this(other(x)).
  RigidPose operator*(const RigidPose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

inline RigidPose compose(const RigidPose& a, const RigidPose& b) { return a * b; }
inline RigidPose inverse(const RigidPose& p) { return p.inverse(); }

namespace detail {

// Coefficients of the SO(3)/SE(3) exponential with series expansions near zero.
struct ExpCoefficients {
  double a;  // sin(t)/t
  double b;  // (1-cos(t))/t^2
  double c;  // (t-sin(t))/t^3
};

inline ExpCoefficients exp_coefficients(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-4) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0};
  }
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  return {s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta)};
}

}  // namespace detail

inline Mat3 so3_exp(const Vec3& w) {
  const auto k = detail::exp_coefficients(w.norm());
  const Mat3 W = skew(w);
  return Mat3::Identity() + k.a * W + k.b * W * W;
}

inline Vec3 so3_log(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-8) {
    // theta ~ 2 n / w; first-order term suffices at this magnitude.
    return (2.0 / q.w()) * v;
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return (theta / n) * v;
}

/// Left Jacobian V of SE(3) (maps translation tangent to translation).
inline Mat3 se3_left_jacobian(const Vec3& w) {
  const auto k = detail::exp_coefficients(w.norm());
  const Mat3 W = skew(w);
  return Mat3::Identity() + k.b * W + k.c * W * W;
}

inline RigidPose se3_exp(const PoseTangent& xi) {
  return {so3_exp(xi.rotation), se3_left_jacobian(xi.rotation) * xi.translation};
}

inline PoseTangent se3_log(const RigidPose& pose) {
  const Vec3 w = so3_log(pose.rotation);
  const Mat3 V = se3_left_jacobian(w);
  return {w, V.partialPivLu().solve(pose.translation)};
}

/// Right-multiplicative update used by the optimizer: pose * exp(delta).
inline RigidPose retract(const RigidPose& pose, const Vec6& delta) {
  return pose * se3_exp(PoseTangent::from_vector(delta));
}

/// Angle of the relative rotation between two poses, radians.
inline double rotation_distance(const RigidPose& a, const RigidPose& b) {
  return so3_log(a.rotation.transpose() * b.rotation).norm();
}

/// Rotation whose columns are the camera axes expressed in world coordinates,
/// returned as the world->camera pose for a camera at `eye` looking at `target`.
/// Image +v follows `down`.
inline RigidPose look_at(const Vec3& eye, const Vec3& target, const Vec3& down) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = down.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return {R, -(R * eye)};
}

}  // namespace tka

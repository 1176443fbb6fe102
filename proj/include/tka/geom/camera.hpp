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

#include <string>

#include <Eigen/Core>

#include "tka/error.hpp"
#include "tka/geom/pose.hpp"

namespace tka {

/// Points closer than this to the focal plane (camera-frame z, mm) cannot be projected.
inline constexpr double kMinDepth = 1.0;

/// Calibrated pinhole model of the C-arm. Pixel (i, j) has its center at (i, j).
struct PinholeCamera {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 512.0;
  double cy = 512.0;
  int width = 1024;
  int height = 1024;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw Error(ErrorCode::kInvalidInput, "focal lengths must be positive");
    if (width <= 0 || height <= 0)
      throw Error(ErrorCode::kInvalidInput, "image size must be positive");
    if (cx < 0.0 || cy < 0.0 || cx > width || cy > height)
      throw Error(ErrorCode::kInvalidInput, "principal point outside the image");
  }

  bool contains(const Vec2& p) const {
    return p.x() >= -0.5 && p.y() >= -0.5 && p.x() <= width - 0.5 && p.y() <= height - 0.5;
  }

  Mat3 matrix() const {
    Mat3 K;
    K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
  }

  /// Projects a camera-frame point.
  Vec2 project_camera_frame(const Vec3& x) const {
    if (!(x.z() > kMinDepth)) {
      throw Error(ErrorCode::kNonPositiveDepth,
                  "point at camera depth " + std::to_string(x.z()) + " mm");
    }
    return {fx * x.x() / x.z() + cx, fy * x.y() / x.z() + cy};
  }

  /// d(pixel)/d(camera-frame point).
  Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& x) const {
    const double iz = 1.0 / x.z();
    Eigen::Matrix<double, 2, 3> J;
    J << fx * iz, 0.0, -fx * x.x() * iz * iz,
         0.0, fy * iz, -fy * x.y() * iz * iz;
    return J;
  }

  /// Camera-frame direction with unit z through pixel p.
  Vec3 ray(const Vec2& p) const { return {(p.x() - cx) / fx, (p.y() - cy) / fy, 1.0}; }
};

inline Vec2 project_point(const PinholeCamera& cam, const RigidPose& pose, const Vec3& p) {
  return cam.project_camera_frame(pose.apply(p));
}

/// World point whose projection is `p` and whose camera-frame depth is `depth`.
inline Vec3 back_project(const PinholeCamera& cam, const RigidPose& pose, const Vec2& p,
                         double depth) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDepth, "back-projection depth " + std::to_string(depth));
  }
  return pose.apply_inverse(depth * cam.ray(p));
}

}  // namespace tka

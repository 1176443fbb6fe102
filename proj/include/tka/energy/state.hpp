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

#include <array>
#include <string>
#include <vector>

#include "tka/energy/contours.hpp"
#include "tka/error.hpp"
#include "tka/geom/pose.hpp"

namespace tka {

/// The unknowns: one camera pose per image (tibia frame -> camera), the two pin
/// poses (pin frame -> tibia frame), and one 3D point per observed contour point.
/// Tibia points live in the tibia frame, pin points in their pin's frame.
struct RegistrationState {
  std::vector<RigidPose> cameras;
  std::array<RigidPose, kPinCount> pins;
  std::vector<std::vector<Vec3>> tibia_points;
  std::vector<std::array<std::vector<Vec3>, kPinCount>> pin_points;

  std::size_t image_count() const { return cameras.size(); }

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& v : tibia_points) n += v.size();
    for (const auto& a : pin_points) n += a[0].size() + a[1].size();
    return n;
  }

  /// Throws LengthMismatch unless there is exactly one 3D point per observation.
  void check_matches(const ContourSet& obs) const {
    const std::size_t n = obs.image_count();
    if (cameras.size() != n || tibia_points.size() != n || pin_points.size() != n)
      throw Error(ErrorCode::kLengthMismatch,
                  "state has " + std::to_string(cameras.size()) + " cameras for " +
                      std::to_string(n) + " images");
    for (std::size_t k = 0; k < n; ++k) {
      if (tibia_points[k].size() != obs.images[k].tibia.size())
        throw Error(ErrorCode::kLengthMismatch, "tibia point count differs in image " + std::to_string(k));
      for (int l = 0; l < kPinCount; ++l)
        if (pin_points[k][l].size() != obs.images[k].pins[l].size())
          throw Error(ErrorCode::kLengthMismatch, "pin " + std::to_string(l + 1) +
                                                      " point count differs in image " + std::to_string(k));
    }
  }
};

/// Column layout of the flat parameter vector:
/// [camera tangents | pin tangents | tibia points by (k,i) | pin points by (k,l,j)].
class StateLayout {
 public:
  explicit StateLayout(const RegistrationState& s) {
    const std::size_t n = s.image_count();
    tibia_offset_.resize(n);
    pin_offset_.resize(n);
    std::size_t off = 6 * n + 6 * kPinCount;
    for (std::size_t k = 0; k < n; ++k) {
      tibia_offset_[k] = off;
      off += 3 * s.tibia_points[k].size();
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (int l = 0; l < kPinCount; ++l) {
        pin_offset_[k][l] = off;
        off += 3 * s.pin_points[k][l].size();
      }
    }
    size_ = off;
    images_ = n;
  }

  std::size_t size() const { return size_; }
  std::size_t camera(std::size_t k) const { return 6 * k; }
  std::size_t pin(int l) const { return 6 * images_ + 6 * static_cast<std::size_t>(l); }
  std::size_t tibia_point(std::size_t k, std::size_t i) const { return tibia_offset_[k] + 3 * i; }
  std::size_t pin_point(std::size_t k, int l, std::size_t j) const { return pin_offset_[k][l] + 3 * j; }

 private:
  std::size_t size_ = 0;
  std::size_t images_ = 0;
  std::vector<std::size_t> tibia_offset_;
  std::vector<std::array<std::size_t, kPinCount>> pin_offset_;
};

}  // namespace tka

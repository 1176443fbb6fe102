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
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tka/error.hpp"
#include "tka/geom/camera.hpp"

namespace tka {

inline constexpr int kPinCount = 2;

/// Observed edge points of one X-ray image, split into the tibia/fibula outline
/// and one subset per pin. Covariances are per point, px^2.
struct ImageContours {
  int camera_id = 0;
  int width = 0;
  int height = 0;
  std::vector<Vec2> tibia;
  std::vector<Mat2> tibia_cov;
  std::array<std::vector<Vec2>, kPinCount> pins;
  std::array<std::vector<Mat2>, kPinCount> pin_cov;
};

struct ContourSet {
  std::vector<ImageContours> images;

  std::size_t image_count() const { return images.size(); }

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& im : images) n += im.tibia.size() + im.pins[0].size() + im.pins[1].size();
    return n;
  }

  /// Throws InvalidInput on out-of-image points, size mismatches or covariances
  /// that are not symmetric positive definite.
  void validate(const PinholeCamera& cam) const {
    auto check = [&](const std::vector<Vec2>& pts, const std::vector<Mat2>& cov,
                     const std::string& where) {
      if (cov.size() != pts.size())
        throw Error(ErrorCode::kInvalidInput, where + ": covariance count does not match points");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!pts[i].allFinite() || !cam.contains(pts[i]))
          throw Error(ErrorCode::kInvalidInput, where + "[" + std::to_string(i) + "] outside the image");
        const Mat2& c = cov[i];
        if (!c.allFinite() || std::abs(c(0, 1) - c(1, 0)) > 1e-12 * (1.0 + c.cwiseAbs().maxCoeff()) ||
            !(c(0, 0) > 0.0) || !(c.determinant() > 0.0))
          throw Error(ErrorCode::kInvalidInput,
                      where + "[" + std::to_string(i) + "] covariance is not positive definite");
      }
    };
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto& im = images[k];
      if (im.width != cam.width || im.height != cam.height)
        throw Error(ErrorCode::kInvalidInput, "images[" + std::to_string(k) +
                                                  "] size does not match the camera intrinsics");
      const std::string base = "images[" + std::to_string(k) + "].";
      check(im.tibia, im.tibia_cov, base + "tibia");
      for (int l = 0; l < kPinCount; ++l)
        check(im.pins[l], im.pin_cov[l], base + "pin" + std::to_string(l + 1));
    }
  }
};

/// Symmetric inverse square root: W with W^T W = cov^-1.
inline Mat2 inverse_sqrt(const Mat2& cov) {
  if (cov(0, 1) == 0.0 && cov(1, 0) == 0.0) {
    return Eigen::Vector2d(1.0 / std::sqrt(cov(0, 0)), 1.0 / std::sqrt(cov(1, 1))).asDiagonal();
  }
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

/// Evenly keeps at most `budget` points (and their covariances), preserving order.
inline void downsample(std::vector<Vec2>& pts, std::vector<Mat2>& cov, std::size_t budget) {
  if (budget == 0 || pts.size() <= budget) return;
  std::vector<Vec2> p;
  std::vector<Mat2> c;
  p.reserve(budget);
  c.reserve(budget);
  for (std::size_t k = 0; k < budget; ++k) {
    const std::size_t i = k * pts.size() / budget;
    p.push_back(pts[i]);
    c.push_back(cov[i]);
  }
  pts = std::move(p);
  cov = std::move(c);
}

struct ContourBudget {
  std::size_t tibia = 600;
  std::size_t per_pin = 200;
};

inline void apply_budget(ContourSet& set, const ContourBudget& budget) {
  for (auto& im : set.images) {
    downsample(im.tibia, im.tibia_cov, budget.tibia);
    for (int l = 0; l < kPinCount; ++l) downsample(im.pins[l], im.pin_cov[l], budget.per_pin);
  }
}

}  // namespace tka

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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tka/geom/pose.hpp"

namespace tka {

/// Uniform-grid nearest-neighbour index over 2D points. Ties resolve to the
/// lowest point index.
class PointIndex2D {
 public:
  struct Hit {
    int index = -1;
    double distance = std::numeric_limits<double>::infinity();
  };

  PointIndex2D() = default;

  explicit PointIndex2D(const std::vector<Vec2>& points) : points_(points) {
    if (points_.empty()) return;
    lo_ = points_.front();
    Vec2 hi = lo_;
    for (const auto& p : points_) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec2 extent = (hi - lo_).cwiseMax(1.0);
    cell_ = std::max(1.0, 2.0 * std::sqrt(extent.x() * extent.y() / points_.size()));
    nx_ = static_cast<int>(extent.x() / cell_) + 1;
    ny_ = static_cast<int>(extent.y() / cell_) + 1;
    start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
    std::vector<int> cell_of(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_of[i] = cell_index(cell_x(points_[i].x()), cell_y(points_[i].y()));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    items_.resize(points_.size());
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) items_[fill[cell_of[i]]++] = static_cast<int>(i);
  }

  bool empty() const { return points_.empty(); }
  const std::vector<Vec2>& points() const { return points_; }

  Hit nearest(const Vec2& q) const {
    Hit best;
    if (points_.empty()) return best;
    const int qx = cell_x(q.x());
    const int qy = cell_y(q.y());
    double best2 = std::numeric_limits<double>::infinity();
    const int max_ring = std::max(nx_, ny_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      for (int cy = qy - ring; cy <= qy + ring; ++cy) {
        if (cy < 0 || cy >= ny_) continue;
        const bool edge_row = (cy == qy - ring || cy == qy + ring);
        for (int cx = qx - ring; cx <= qx + ring; cx += (edge_row ? 1 : 2 * ring)) {
          if (cx >= 0 && cx < nx_) {
            const int c = cell_index(cx, cy);
            for (int k = start_[c]; k < start_[c + 1]; ++k) {
              const int i = items_[k];
              const double d2 = (points_[i] - q).squaredNorm();
              if (d2 < best2 || (d2 == best2 && i < best.index)) {
                best2 = d2;
                best.index = i;
              }
            }
          }
          if (ring == 0) break;
        }
      }
      // Anything in ring+1 or beyond is at least ring * cell away.
      if (best.index >= 0 && std::sqrt(best2) <= ring * cell_) break;
    }
    best.distance = std::sqrt(best2);
    return best;
  }

 private:
  int cell_x(double x) const { return std::clamp(static_cast<int>(std::floor((x - lo_.x()) / cell_)), 0, nx_ - 1); }
  int cell_y(double y) const { return std::clamp(static_cast<int>(std::floor((y - lo_.y()) / cell_)), 0, ny_ - 1); }
  int cell_index(int x, int y) const { return y * nx_ + x; }

  std::vector<Vec2> points_;
  Vec2 lo_ = Vec2::Zero();
  double cell_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<int> start_;
  std::vector<int> items_;
};

}  // namespace tka

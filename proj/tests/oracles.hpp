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

// Reference implementations used only by the tests. They deliberately take a
// different computational route from the library code they check.

#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "tka/geom/mesh.hpp"

namespace tka::oracle {

inline Vec3 closest_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return a + t * d;
}

/// Plane projection + barycentric inside test, else the best of the three edges.
inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a).normalized();
  const Vec3 q = p - n.dot(p - a) * n;
  Eigen::Matrix<double, 3, 2> E;
  E << b - a, c - a;
  const Eigen::Vector2d uv = E.colPivHouseholderQr().solve(q - a);
  if (uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() + uv.y() <= 1.0) return q;
  Vec3 best = closest_on_segment(p, a, b);
  for (const Vec3& cand : {closest_on_segment(p, b, c), closest_on_segment(p, c, a)}) {
    if ((cand - p).squaredNorm() < (best - p).squaredNorm()) best = cand;
  }
  return best;
}

struct BruteResult {
  Vec3 point;
  int triangle;
  double distance;
};

inline BruteResult brute_force_closest(const TriangleMesh& mesh, const Vec3& p) {
  BruteResult best{Vec3::Zero(), -1, std::numeric_limits<double>::infinity()};
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3 q = closest_on_triangle(p, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2));
    const double d = (q - p).norm();
    if (d < best.distance) best = {q, static_cast<int>(t), d};
  }
  return best;
}

/// Total-least-squares plane via SVD of the centered point matrix.
inline std::pair<Vec3, Vec3> svd_plane(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::MatrixXd A(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) A.row(i) = (pts[i] - c).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  return {c, svd.matrixV().col(2)};
}

}  // namespace tka::oracle

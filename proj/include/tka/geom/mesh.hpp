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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tka/error.hpp"
#include "tka/geom/pose.hpp"

namespace tka {

using Face = std::array<int, 3>;

/// Undirected edge with up to two incident faces (-1 when absent).
struct MeshEdge {
  int v0 = -1;
  int v1 = -1;
  int f0 = -1;
  int f1 = -1;
};

/// Closest point on a triangle (Ericson, Real-Time Collision Detection, 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  /// Query minus closest point (the per-axis "coordinate distance").
  Vec3 delta = Vec3::Zero();
  int triangle = -1;
  double distance() const { return delta.norm(); }
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.squaredNorm();
  }
};

/// Indexed triangle surface, immutable after construction.
///
/// Construction merges vertices closer than 1e-6 mm, drops faces that become
/// degenerate, and builds a bounding-volume hierarchy for closest-point queries.
class TriangleMesh {
 public:
  static constexpr double kWeldTolerance = 1e-6;

  TriangleMesh() = default;

  TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
    for (const auto& f : faces) {
      for (int idx : f) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= vertices.size())
          throw Error(ErrorCode::kInvalidMesh, "face index " + std::to_string(idx) +
                                                   " out of range for " +
                                                   std::to_string(vertices.size()) + " vertices");
      }
    }
    weld_and_clean(std::move(vertices), std::move(faces));
    build_tree();
    build_edges();
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  bool empty() const { return faces_.empty(); }
  std::size_t triangle_count() const { return faces_.size(); }

  /// Edges in order of first appearance; non-manifold extra faces are ignored.
  const std::vector<MeshEdge>& edges() const { return edges_; }

  const Vec3& corner(std::size_t tri, int k) const { return vertices_[faces_[tri][k]]; }

  Vec3 face_normal(std::size_t tri) const {
    return (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0));
  }

  /// Euclidean-closest surface point; ties go to the lowest triangle index.
  ClosestPoint closest_point(const Vec3& p) const {
    if (empty()) throw Error(ErrorCode::kEmptyMesh, "closest-point query on an empty mesh");
    double best = std::numeric_limits<double>::infinity();
    int best_tri = -1;
    Vec3 best_point = Vec3::Zero();

    // Explicit stack; nodes[0] is the root.
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (node.box.squared_distance(p) > best) continue;
      if (node.count > 0) {
        for (int k = node.first; k < node.first + node.count; ++k) {
          const int tri = order_[k];
          const Vec3 q = closest_point_on_triangle(p, corner(tri, 0), corner(tri, 1), corner(tri, 2));
          const double d = (p - q).squaredNorm();
          if (d < best || (d == best && tri < best_tri)) {
            best = d;
            best_tri = tri;
            best_point = q;
          }
        }
        continue;
      }
      // Visit the nearer child first.
      const double dl = nodes_[node.left].box.squared_distance(p);
      const double dr = nodes_[node.right].box.squared_distance(p);
      if (dl <= dr) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
    return {best_point, p - best_point, best_tri};
  }

  Aabb bounds() const { return nodes_.empty() ? Aabb{} : nodes_.front().box; }

  TriangleMesh transformed(const RigidPose& pose) const {
    std::vector<Vec3> v;
    v.reserve(vertices_.size());
    for (const auto& x : vertices_) v.push_back(pose.apply(x));
    return TriangleMesh(std::move(v), faces_);
  }

 private:
  struct Node {
    Aabb box;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
  };

  void weld_and_clean(std::vector<Vec3> vertices, std::vector<Face> faces) {
    // Hash on a grid of the weld tolerance; a match may sit in any neighbouring cell.
    using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
    std::map<Key, std::vector<int>> grid;
    std::vector<int> remap(vertices.size());
    auto key_of = [](const Vec3& v) {
      return Key{static_cast<std::int64_t>(std::floor(v.x() / kWeldTolerance)),
                 static_cast<std::int64_t>(std::floor(v.y() / kWeldTolerance)),
                 static_cast<std::int64_t>(std::floor(v.z() / kWeldTolerance))};
    };
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const Vec3& v = vertices[i];
      const auto [kx, ky, kz] = key_of(v);
      int found = -1;
      for (std::int64_t dx = -1; dx <= 1 && found < 0; ++dx)
        for (std::int64_t dy = -1; dy <= 1 && found < 0; ++dy)
          for (std::int64_t dz = -1; dz <= 1 && found < 0; ++dz) {
            auto it = grid.find(Key{kx + dx, ky + dy, kz + dz});
            if (it == grid.end()) continue;
            for (int j : it->second) {
              if ((vertices_[j] - v).norm() <= kWeldTolerance) {
                found = j;
                break;
              }
            }
          }
      if (found < 0) {
        found = static_cast<int>(vertices_.size());
        vertices_.push_back(v);
        grid[Key{kx, ky, kz}].push_back(found);
      }
      remap[i] = found;
    }
    faces_.reserve(faces.size());
    for (const auto& f : faces) {
      const Face g{remap[f[0]], remap[f[1]], remap[f[2]]};
      if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
      const Vec3 n = (vertices_[g[1]] - vertices_[g[0]]).cross(vertices_[g[2]] - vertices_[g[0]]);
      if (n.norm() <= 1e-12) continue;
      faces_.push_back(g);
    }
  }

  void build_tree() {
    nodes_.clear();
    order_.resize(faces_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (faces_.empty()) return;
    centroids_.resize(faces_.size());
    for (std::size_t t = 0; t < faces_.size(); ++t)
      centroids_[t] = (corner(t, 0) + corner(t, 1) + corner(t, 2)) / 3.0;
    nodes_.reserve(2 * faces_.size());
    build_node(0, static_cast<int>(faces_.size()), 0);
    centroids_.clear();
    centroids_.shrink_to_fit();
  }

  void build_edges() {
    std::map<std::pair<int, int>, int> index;
    edges_.clear();
    for (std::size_t t = 0; t < faces_.size(); ++t) {
      for (int k = 0; k < 3; ++k) {
        const auto key = std::minmax(faces_[t][k], faces_[t][(k + 1) % 3]);
        auto [it, inserted] = index.try_emplace(key, static_cast<int>(edges_.size()));
        if (inserted) {
          edges_.push_back({key.first, key.second, static_cast<int>(t), -1});
        } else if (edges_[it->second].f1 < 0) {
          edges_[it->second].f1 = static_cast<int>(t);
        }
      }
    }
  }

  int build_node(int first, int count, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    Aabb centroid_box;
    for (int k = first; k < first + count; ++k) {
      const int tri = order_[k];
      for (int c = 0; c < 3; ++c) box.extend(corner(tri, c));
      centroid_box.extend(centroids_[tri]);
    }
    nodes_[index].box = box;
    if (count <= 4 || depth >= 60) {
      nodes_[index].first = first;
      nodes_[index].count = count;
      return index;
    }
    int axis = 0;
    (centroid_box.hi - centroid_box.lo).maxCoeff(&axis);
    const int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](int a, int b) {
                       const double ca = centroids_[a][axis];
                       const double cb = centroids_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const int left = build_node(first, mid - first, depth + 1);
    const int right = build_node(mid, first + count - mid, depth + 1);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<MeshEdge> edges_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
};

inline ClosestPoint closest_point_on_mesh(const TriangleMesh& mesh, const Vec3& p) {
  return mesh.closest_point(p);
}

}  // namespace tka

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
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "tka/geom/mesh.hpp"

namespace tka::primitives {

inline TriangleMesh box(const Vec3& half_extent) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.emplace_back((i & 1 ? 1 : -1) * half_extent.x(), (i & 2 ? 1 : -1) * half_extent.y(),
                   (i & 4 ? 1 : -1) * half_extent.z());
  }
  // Outward-facing, counter-clockwise.
  std::vector<Face> f = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                         {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return TriangleMesh(std::move(v), std::move(f));
}

inline TriangleMesh icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero()) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]);
      const int b = mid(tri[1], tri[2]);
      const int c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = center + radius * p;
  return TriangleMesh(std::move(v), std::move(f));
}

/// Closed prism approximating a cylinder along local +z, centered at the origin.
/// Caps are fans over the rim vertices, so every vertex lies at `radius` from the axis.
inline TriangleMesh cylinder(double radius, double length, int sides, int segments = 1) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int s = 0; s <= segments; ++s) {
    const double z = -0.5 * length + length * s / segments;
    for (int i = 0; i < sides; ++i) {
      const double a = 2.0 * std::numbers::pi * i / sides;
      v.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
    }
  }
  for (int s = 0; s < segments; ++s) {
    for (int i = 0; i < sides; ++i) {
      const int a = s * sides + i;
      const int b = s * sides + (i + 1) % sides;
      const int c = a + sides;
      const int d = b + sides;
      f.push_back({a, b, d});
      f.push_back({a, d, c});
    }
  }
  const int top = segments * sides;
  for (int i = 1; i + 1 < sides; ++i) {
    f.push_back({0, i + 1, i});
    f.push_back({top, top + i, top + i + 1});
  }
  return TriangleMesh(std::move(v), std::move(f));
}

/// Parameters of the procedural proximal-tibia surrogate.
struct TibiaShape {
  double bottom_z = -130.0;       // distal cut of the shaft segment (mm)
  double top_z = 5.0;             // plateau height (mm)
  double shaft_ml = 14.0;         // shaft semi-axis, medial-lateral (x)
  double shaft_ap = 12.0;         // shaft semi-axis, anterior-posterior (y)
  double plateau_ml = 38.0;
  double plateau_ap = 26.0;
  double flare_start_z = -65.0;
  double tuberosity = 6.0;        // anterior bump height
  int rings = 56;
  int sides = 64;
  // Fibula: a thin shaft with a head, posterolateral to the tibia. Set the
  // radius to 0 to leave it out.
  double fibula_radius = 7.0;
  double fibula_head = 4.0;       // extra head radius
  double fibula_x = -36.0;
  double fibula_y = -14.0;
  double fibula_top_z = -28.0;
};

inline double smoothstep(double a, double b, double x) {
  const double t = std::clamp((x - a) / (b - a), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

/// Closed tube: `section(z, angle)` gives the ring points, caps are fans
/// around the ring centroids. Appends to v/f.
template <class Section>
void append_tube(std::vector<Vec3>& v, std::vector<Face>& f, double z0, double z1, int rings, int sides,
                 Section section) {
  const int base = static_cast<int>(v.size());
  for (int r = 0; r < rings; ++r) {
    const double z = z0 + (z1 - z0) * r / (rings - 1);
    for (int i = 0; i < sides; ++i) v.push_back(section(z, 2.0 * std::numbers::pi * i / sides));
  }
  for (int r = 0; r + 1 < rings; ++r) {
    for (int i = 0; i < sides; ++i) {
      const int a = base + r * sides + i;
      const int b = base + r * sides + (i + 1) % sides;
      f.push_back({a, b, b + sides});
      f.push_back({a, b + sides, a + sides});
    }
  }
  Vec3 bottom_c = Vec3::Zero();
  Vec3 top_c = Vec3::Zero();
  const int top_ring = base + (rings - 1) * sides;
  for (int i = 0; i < sides; ++i) {
    bottom_c += v[base + i];
    top_c += v[top_ring + i];
  }
  v.push_back(bottom_c / sides);
  v.push_back(top_c / sides);
  const int bc = static_cast<int>(v.size()) - 2;
  const int tc = bc + 1;
  for (int i = 0; i < sides; ++i) {
    const int a = base + i;
    const int b = base + (i + 1) % sides;
    f.push_back({bc, b, a});
    f.push_back({tc, top_ring + i, top_ring + (i + 1) % sides});
  }
}

/// Tube-with-flare surrogate for the proximal tibia, plus a fibula. The
/// mechanical axis is +z, +x is medial-lateral and +y anterior. The tibia
/// cross-section is an off-center ellipse with an anterior tuberosity bump.
inline TriangleMesh tibia_surrogate(const TibiaShape& s = {}) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  append_tube(v, f, s.bottom_z, s.top_z, s.rings, s.sides, [&](double z, double a) -> Vec3 {
    const double flare = smoothstep(s.flare_start_z, s.top_z - 10.0, z);
    const double ml = s.shaft_ml + (s.plateau_ml - s.shaft_ml) * flare;
    double ap = s.shaft_ap + (s.plateau_ap - s.shaft_ap) * flare;
    const double bump_profile = std::exp(-std::pow((z + 35.0) / 12.0, 2.0));
    const double front = std::max(0.0, std::sin(a));
    ap += s.tuberosity * bump_profile * std::pow(front, 6.0);
    const double cx = 5.0 * flare;
    const double cy = -3.0 * flare + 2.0 * std::sin(z / 40.0);
    return {cx + ml * std::cos(a), cy + ap * std::sin(a), z};
  });
  if (s.fibula_radius > 0.0) {
    append_tube(v, f, s.bottom_z, s.fibula_top_z, s.rings / 2, s.sides / 2, [&](double z, double a) -> Vec3 {
      const double head = s.fibula_head * std::exp(-std::pow((z - s.fibula_top_z - 10.0) / 9.0, 2.0));
      const double r = s.fibula_radius + head;
      const double bow = 3.0 * std::sin(std::numbers::pi * (z - s.bottom_z) / (s.fibula_top_z - s.bottom_z));
      return {s.fibula_x - bow + r * std::cos(a), s.fibula_y + r * std::sin(a), z};
    });
  }
  return TriangleMesh(std::move(v), std::move(f));
}

/// Trocar pin surrogate: 3.2 mm diameter, 80 mm long, axis along local +z.
inline TriangleMesh trocar_pin() { return cylinder(1.6, 80.0, 16, 1); }

}  // namespace tka::primitives

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
#include <optional>
#include <vector>

#include "tka/error.hpp"
#include "tka/geom/camera.hpp"
#include "tka/geom/mesh.hpp"
#include "tka/geom/pose.hpp"

namespace tka {

/// One occluding-contour sample: its pixel position and the mesh-frame surface
/// point that projects there.
struct SilhouettePoint {
  Vec2 pixel;
  Vec3 surface;
};

struct Silhouette {
  std::vector<SilhouettePoint> points;

  std::vector<Vec2> pixels() const {
    std::vector<Vec2> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.pixel);
    return out;
  }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct SilhouetteOptions {
  /// Evenly subsample the traced boundary down to this many points (0 = keep all).
  std::size_t max_points = 400;
  /// Snap boundary pixels onto projected contour-generator edges.
  bool subpixel = true;
  /// Search radius for the snap, pixels.
  double snap_radius = 2.0;
};

namespace detail {

struct Raster {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> mask;
  std::vector<int> triangle;

  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < w && y < h; }
  std::size_t at(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }
};

// Clockwise in image coordinates (y down), starting west.
inline constexpr std::array<std::array<int, 2>, 8> kRing = {
    {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};

inline int ring_direction(int dx, int dy) {
  for (int d = 0; d < 8; ++d)
    if (kRing[d][0] == dx && kRing[d][1] == dy) return d;
  return -1;
}

// Moore-neighbour trace of the outer boundary of component `label`, starting at
// its first pixel in raster order (whose west neighbour is outside the component).
inline std::vector<std::array<int, 2>> trace_component(const std::vector<int>& labels,
                                                       const Raster& r, int label, int sx,
                                                       int sy, std::size_t size_hint) {
  auto in = [&](int x, int y) { return r.inside(x, y) && labels[r.at(x, y)] == label; };
  std::vector<std::array<int, 2>> out;
  out.push_back({sx, sy});
  int cx = sx;
  int cy = sy;
  int back_dir = 0;
  const int start_bx = sx - 1;
  const int start_by = sy;
  const std::size_t cap = 4 * size_hint + 16;
  while (out.size() < cap) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back_dir + k) % 8;
      if (in(cx + kRing[d][0], cy + kRing[d][1])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const int nx = cx + kRing[found][0];
    const int ny = cy + kRing[found][1];
    const int pd = (found + 7) % 8;
    const int bx = cx + kRing[pd][0];
    const int by = cy + kRing[pd][1];
    if (nx == sx && ny == sy && bx == start_bx && by == start_by) break;
    if (!(nx == sx && ny == sy)) out.push_back({nx, ny});
    cx = nx;
    cy = ny;
    back_dir = ring_direction(bx - nx, by - ny);
  }
  return out;
}

struct GeneratorSegment {
  Vec2 a;
  Vec2 b;
  Vec3 A;  // mesh frame
  Vec3 B;
  double za;
  double zb;
};

}  // namespace detail

/// Occluding contour of `mesh` seen by `cam` at `pose`.
///
/// When `pin_pose` is given the mesh lives in a pin frame and is mapped to the
/// tibia-model frame by it first. The footprint is rasterized at image resolution
/// into a boolean mask; the outer boundary of every connected component is traced
/// in raster order, boundary pixels on the image border are dropped, the rest are
/// subsampled evenly and snapped onto the nearest projected generator edge.
/// Throws OffScreen when no triangle covers an image pixel.
inline Silhouette extract_silhouette(const TriangleMesh& mesh, const PinholeCamera& cam,
                                     const RigidPose& pose,
                                     const std::optional<RigidPose>& pin_pose = std::nullopt,
                                     const SilhouetteOptions& options = {}) {
  if (mesh.empty()) throw Error(ErrorCode::kEmptyMesh, "silhouette of an empty mesh");
  const RigidPose to_camera = pin_pose ? pose * *pin_pose : pose;
  const auto& verts = mesh.vertices();
  const auto& faces = mesh.faces();

  std::vector<Vec3> xc(verts.size());
  std::vector<Vec2> uv(verts.size());
  std::vector<std::uint8_t> valid(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    xc[i] = to_camera.apply(verts[i]);
    valid[i] = xc[i].z() > kMinDepth;
    if (valid[i]) uv[i] = {cam.fx * xc[i].x() / xc[i].z() + cam.cx, cam.fy * xc[i].y() / xc[i].z() + cam.cy};
  }
  auto face_ok = [&](std::size_t t) {
    return valid[faces[t][0]] && valid[faces[t][1]] && valid[faces[t][2]];
  };

  // Pixel-center bounds of each triangle clipped to the image.
  int gx0 = std::numeric_limits<int>::max();
  int gy0 = std::numeric_limits<int>::max();
  int gx1 = std::numeric_limits<int>::min();
  int gy1 = std::numeric_limits<int>::min();
  std::vector<std::array<int, 4>> tri_box(faces.size(), {0, -1, 0, -1});
  for (std::size_t t = 0; t < faces.size(); ++t) {
    if (!face_ok(t)) continue;
    const Vec2& a = uv[faces[t][0]];
    const Vec2& b = uv[faces[t][1]];
    const Vec2& c = uv[faces[t][2]];
    const double lox = std::min({a.x(), b.x(), c.x()});
    const double hix = std::max({a.x(), b.x(), c.x()});
    const double loy = std::min({a.y(), b.y(), c.y()});
    const double hiy = std::max({a.y(), b.y(), c.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::max(lox, -1.0))));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(std::min(hix, 1e9))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::max(loy, -1.0))));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(std::min(hiy, 1e9))));
    if (x0 > x1 || y0 > y1) continue;
    tri_box[t] = {x0, x1, y0, y1};
    gx0 = std::min(gx0, x0);
    gx1 = std::max(gx1, x1);
    gy0 = std::min(gy0, y0);
    gy1 = std::max(gy1, y1);
  }
  if (gx0 > gx1) throw Error(ErrorCode::kOffScreen, "mesh does not project into the image");

  // Raster with a one-pixel empty margin.
  detail::Raster r;
  r.x0 = gx0 - 1;
  r.y0 = gy0 - 1;
  r.w = gx1 - gx0 + 3;
  r.h = gy1 - gy0 + 3;
  r.mask.assign(static_cast<std::size_t>(r.w) * r.h, 0);
  r.triangle.assign(r.mask.size(), -1);
  std::size_t covered = 0;
  for (std::size_t t = 0; t < faces.size(); ++t) {
    const auto& box = tri_box[t];
    if (box[0] > box[1]) continue;
    const Vec2& a = uv[faces[t][0]];
    const Vec2& b = uv[faces[t][1]];
    const Vec2& c = uv[faces[t][2]];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const double sgn = area > 0 ? 1.0 : -1.0;
    for (int y = box[2]; y <= box[3]; ++y) {
      for (int x = box[0]; x <= box[1]; ++x) {
        const double e0 = sgn * ((b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x()));
        const double e1 = sgn * ((c.x() - b.x()) * (y - b.y()) - (c.y() - b.y()) * (x - b.x()));
        const double e2 = sgn * ((a.x() - c.x()) * (y - c.y()) - (a.y() - c.y()) * (x - c.x()));
        if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
        const std::size_t idx = r.at(x - r.x0, y - r.y0);
        if (!r.mask[idx]) ++covered;
        r.mask[idx] = 1;
        if (r.triangle[idx] < 0) r.triangle[idx] = static_cast<int>(t);
      }
    }
  }
  if (covered == 0) throw Error(ErrorCode::kOffScreen, "no mesh triangle covers an image pixel");

  // 8-connected components, labelled in raster order of their first pixel.
  std::vector<int> labels(r.mask.size(), 0);
  std::vector<std::array<int, 2>> starts;
  std::vector<std::size_t> sizes;
  std::vector<std::array<int, 2>> queue;
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      const std::size_t idx = r.at(x, y);
      if (!r.mask[idx] || labels[idx]) continue;
      const int label = static_cast<int>(starts.size()) + 1;
      starts.push_back({x, y});
      std::size_t count = 0;
      queue.clear();
      queue.push_back({x, y});
      labels[idx] = label;
      while (!queue.empty()) {
        const auto [qx, qy] = queue.back();
        queue.pop_back();
        ++count;
        for (const auto& d : detail::kRing) {
          const int nx = qx + d[0];
          const int ny = qy + d[1];
          if (!r.inside(nx, ny)) continue;
          const std::size_t n = r.at(nx, ny);
          if (r.mask[n] && !labels[n]) {
            labels[n] = label;
            queue.push_back({nx, ny});
          }
        }
      }
      sizes.push_back(count);
    }
  }

  std::vector<std::array<int, 2>> boundary;  // image pixel coordinates
  for (std::size_t c = 0; c < starts.size(); ++c) {
    const auto trace = detail::trace_component(labels, r, static_cast<int>(c) + 1, starts[c][0],
                                               starts[c][1], sizes[c]);
    for (const auto& p : trace) {
      const int x = p[0] + r.x0;
      const int y = p[1] + r.y0;
      if (x == 0 || y == 0 || x == cam.width - 1 || y == cam.height - 1) continue;
      boundary.push_back({x, y});
    }
  }

  std::vector<std::array<int, 2>> sampled;
  if (options.max_points > 0 && boundary.size() > options.max_points) {
    sampled.reserve(options.max_points);
    for (std::size_t k = 0; k < options.max_points; ++k)
      sampled.push_back(boundary[k * boundary.size() / options.max_points]);
  } else {
    sampled = std::move(boundary);
  }

  // Generator edges: one incident face toward the camera and one away, or open edges.
  std::vector<detail::GeneratorSegment> segments;
  if (options.subpixel) {
    std::vector<signed char> facing(faces.size(), 0);
    for (std::size_t t = 0; t < faces.size(); ++t) {
      if (!face_ok(t)) continue;
      const Vec3& a = xc[faces[t][0]];
      const Vec3 n = (xc[faces[t][1]] - a).cross(xc[faces[t][2]] - a);
      facing[t] = n.dot(a) < 0.0 ? 1 : -1;
    }
    for (const auto& e : mesh.edges()) {
      if (!valid[e.v0] || !valid[e.v1]) continue;
      const signed char f0 = facing[e.f0];
      const signed char f1 = e.f1 >= 0 ? facing[e.f1] : 0;
      if (f0 == 0) continue;
      if (e.f1 >= 0 && (f1 == 0 || f0 == f1)) continue;
      segments.push_back({uv[e.v0], uv[e.v1], verts[e.v0], verts[e.v1], xc[e.v0].z(), xc[e.v1].z()});
    }
  }

  // Uniform grid over the raster region for segment lookup.
  constexpr int kCell = 4;
  const int gw = r.w / kCell + 1;
  const int gh = r.h / kCell + 1;
  std::vector<std::vector<int>> grid;
  auto cell_of = [&](double v, int origin, int limit) {
    return std::clamp(static_cast<int>(std::floor((v - origin) / kCell)), 0, limit - 1);
  };
  if (!segments.empty()) {
    grid.resize(static_cast<std::size_t>(gw) * gh);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& seg = segments[s];
      const double pad = options.snap_radius;
      const double lox = std::min(seg.a.x(), seg.b.x()) - pad;
      const double hix = std::max(seg.a.x(), seg.b.x()) + pad;
      const double loy = std::min(seg.a.y(), seg.b.y()) - pad;
      const double hiy = std::max(seg.a.y(), seg.b.y()) + pad;
      if (hix < r.x0 || hiy < r.y0 || lox > r.x0 + r.w || loy > r.y0 + r.h) continue;
      const int cx0 = cell_of(lox, r.x0, gw);
      const int cx1 = cell_of(hix, r.x0, gw);
      const int cy0 = cell_of(loy, r.y0, gh);
      const int cy1 = cell_of(hiy, r.y0, gh);
      for (int cy = cy0; cy <= cy1; ++cy)
        for (int cx = cx0; cx <= cx1; ++cx)
          grid[static_cast<std::size_t>(cy) * gw + cx].push_back(static_cast<int>(s));
    }
  }

  const RigidPose to_mesh = to_camera.inverse();
  Silhouette out;
  out.points.reserve(sampled.size());
  for (const auto& px : sampled) {
    const Vec2 q(px[0], px[1]);
    bool snapped = false;
    if (!grid.empty()) {
      const auto& cell = grid[static_cast<std::size_t>(cell_of(q.y(), r.y0, gh)) * gw +
                              cell_of(q.x(), r.x0, gw)];
      double best = options.snap_radius * options.snap_radius;
      int best_seg = -1;
      double best_s = 0.0;
      for (int s : cell) {
        const auto& seg = segments[s];
        const Vec2 d = seg.b - seg.a;
        const double len2 = d.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((q - seg.a).dot(d) / len2, 0.0, 1.0) : 0.0;
        const double dist2 = (seg.a + t * d - q).squaredNorm();
        if (dist2 < best || (dist2 == best && s < best_seg)) {
          best = dist2;
          best_seg = s;
          best_s = t;
        }
      }
      if (best_seg >= 0) {
        const auto& seg = segments[best_seg];
        const double denom = (1.0 - best_s) * seg.zb + best_s * seg.za;
        const double alpha = denom > 0.0 ? best_s * seg.za / denom : best_s;
        const Vec3 Q = seg.A + alpha * (seg.B - seg.A);
        const Vec3 x = to_camera.apply(Q);
        out.points.push_back({Vec2(cam.fx * x.x() / x.z() + cam.cx, cam.fy * x.y() / x.z() + cam.cy), Q});
        snapped = true;
      }
    }
    if (snapped) continue;
    // Fallback: intersect the pixel ray with the covering triangle's plane.
    const int tri = r.triangle[r.at(px[0] - r.x0, px[1] - r.y0)];
    const Vec3& a = xc[faces[tri][0]];
    const Vec3 n = (xc[faces[tri][1]] - a).cross(xc[faces[tri][2]] - a);
    const Vec3 ray = cam.ray(q);
    const double nd = n.dot(ray);
    if (std::abs(nd) > 1e-12 * n.norm()) {
      out.points.push_back({q, to_mesh.apply((n.dot(a) / nd) * ray)});
    } else {
      const Vec3 x = (a + xc[faces[tri][1]] + xc[faces[tri][2]]) / 3.0;
      out.points.push_back({cam.project_camera_frame(x), to_mesh.apply(x)});
    }
  }
  return out;
}

}  // namespace tka

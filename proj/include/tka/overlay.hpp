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
#include <string>
#include <vector>

#include "tka/energy/contours.hpp"
#include "tka/energy/state.hpp"
#include "tka/energy/terms.hpp"
#include "tka/geom/camera.hpp"
#include "tka/geom/point_index.hpp"
#include "tka/geom/silhouette.hpp"

// Diagnostic overlays: observed contours, model silhouettes under a state, and
// the state's 3D contour points projected back into each image.
namespace tka {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  void dot(const Vec2& p, const std::array<std::uint8_t, 3>& c, int radius = 1) {
    const int x0 = static_cast<int>(std::lround(p.x()));
    const int y0 = static_cast<int>(std::lround(p.y()));
    for (int y = y0 - radius; y <= y0 + radius; ++y)
      for (int x = x0 - radius; x <= x0 + radius; ++x) {
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
        std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
      }
  }
};

inline constexpr std::array<std::uint8_t, 3> kObservedColor = {40, 220, 60};
inline constexpr std::array<std::uint8_t, 3> kSilhouetteColor = {230, 40, 40};
inline constexpr std::array<std::uint8_t, 3> kStatePointColor = {60, 140, 255};

struct OverlayLayers {
  std::vector<Vec2> observed;
  std::vector<Vec2> silhouette;
  /// Projections of the state's points; points behind the camera are skipped.
  std::vector<Vec2> state_points;
};

namespace detail {

inline void check_overlay_inputs(const RegistrationState& s, const ContourSet& contours) {
  if (s.image_count() != contours.image_count())
    throw Error(ErrorCode::kLengthMismatch, "state has " + std::to_string(s.image_count()) +
                                                " cameras, contour file has " +
                                                std::to_string(contours.image_count()) + " images");
}

}  // namespace detail

/// Dense (unsubsampled) silhouettes of every mesh in image k.
inline OverlayLayers overlay_layers(const RegistrationState& s, const ProblemInputs& in, std::size_t k) {
  detail::check_overlay_inputs(s, in.contours);
  OverlayLayers L;
  const auto& im = in.contours.images[k];
  const RigidPose& C = s.cameras[k];
  L.observed = im.tibia;
  for (const auto& v : im.pins) L.observed.insert(L.observed.end(), v.begin(), v.end());
  const SilhouetteOptions dense{.max_points = 0};
  for (const auto& p : extract_silhouette(in.tibia, in.camera, C, std::nullopt, dense).points)
    L.silhouette.push_back(p.pixel);
  for (int l = 0; l < kPinCount; ++l)
    for (const auto& p : extract_silhouette(in.pin, in.camera, C, s.pins[l], dense).points)
      L.silhouette.push_back(p.pixel);
  auto put = [&](const Vec3& world) {
    const Vec3 x = C.apply(world);
    if (x.z() > kMinDepth) L.state_points.push_back(in.camera.project_camera_frame(x));
  };
  if (k < s.tibia_points.size())
    for (const auto& p : s.tibia_points[k]) put(p);
  if (k < s.pin_points.size())
    for (int l = 0; l < kPinCount; ++l)
      for (const auto& p : s.pin_points[k][l]) put(s.pins[l].apply(p));
  return L;
}

inline RgbImage render_overlay(const OverlayLayers& L, int width, int height) {
  RgbImage img(width, height);
  for (const auto& p : L.observed) img.dot(p, kObservedColor, 1);
  for (const auto& p : L.silhouette) img.dot(p, kSilhouetteColor, 0);
  for (const auto& p : L.state_points) img.dot(p, kStatePointColor, 0);
  return img;
}

/// Symmetric maximum nearest-neighbour distance between observed contour points
/// and the dense silhouettes, px. Infinite when either side is empty.
inline double overlay_distance(const OverlayLayers& L) {
  if (L.observed.empty() || L.silhouette.empty()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  const PointIndex2D sil(L.silhouette);
  for (const auto& p : L.observed) worst = std::max(worst, sil.nearest(p).distance);
  const PointIndex2D obs(L.observed);
  for (const auto& p : L.silhouette) worst = std::max(worst, obs.nearest(p).distance);
  return worst;
}

}  // namespace tka

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
#include <cstdint>
#include <numbers>
#include <random>

#include "tka/energy/contours.hpp"
#include "tka/energy/state.hpp"
#include "tka/geom/camera.hpp"
#include "tka/geom/primitives.hpp"
#include "tka/geom/silhouette.hpp"
#include "tka/resection.hpp"

namespace tka {

/// splitmix64 finalizer; derives independent stream seeds from a tuple.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t v : {a, b, c, d}) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    h ^= h >> 31;
  }
  return h;
}

struct SceneOptions {
  double camera_distance = 500.0;  // mm, source to tibia
  double min_azimuth_deg = -40.0;  // first view, from the lateral (+x) side
  double max_azimuth_deg = -10.0;
  double min_separation_deg = 30.0;
  double max_separation_deg = 60.0;
  double elevation_jitter_deg = 5.0;
  double min_pin_gap = 20.0;  // mm, along medial-lateral
  double max_pin_gap = 30.0;
  double pin_height = -15.0;  // mm along the mechanical axis
  double max_tilt_deg = 3.0;  // planned CTR / STR spread, inside the clinical tolerance
  primitives::TibiaShape tibia;
  PinholeCamera camera;
};

struct Scenario {
  TriangleMesh tibia;
  TriangleMesh pin;
  PinholeCamera camera;
  std::vector<RigidPose> cameras;
  std::array<RigidPose, kPinCount> pins;
  /// Pins of the untilted plan, used as the clinical initial guess.
  std::array<RigidPose, kPinCount> ideal_pins;
  AnatomyFrame frame;
  std::uint64_t seed = 0;
};

namespace detail {

inline double radians(double deg) { return deg * std::numbers::pi / 180.0; }

// Pin along `axis` through `center`; its local y axis is the plane normal.
inline RigidPose pin_along(const Vec3& axis, const Vec3& normal, const Vec3& center) {
  Mat3 R;
  R.col(2) = axis.normalized();
  R.col(1) = normal.normalized();
  R.col(0) = R.col(1).cross(R.col(2));
  return {R, center};
}

}  // namespace detail

/// Deterministic synthetic tibia + two parallel pins + two C-arm views.
inline Scenario generate_scene(std::uint64_t seed, const SceneOptions& opt = {}) {
  using detail::radians;
  std::mt19937_64 rng(mix_seed(seed, 0x5ce9e));
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  Scenario sc;
  sc.seed = seed;
  sc.tibia = primitives::tibia_surrogate(opt.tibia);
  sc.pin = primitives::trocar_pin();
  sc.camera = opt.camera;
  const AnatomyFrame& f = sc.frame;

  // Views orbit the mechanical axis, image "down" pointing distally.
  const Vec3 target(0.0, 0.0, 0.5 * (opt.tibia.bottom_z + opt.tibia.top_z) + 15.0);
  const double a1 = uniform(opt.min_azimuth_deg, opt.max_azimuth_deg);
  const double a2 = a1 + uniform(opt.min_separation_deg, opt.max_separation_deg);
  for (double az : {a1, a2}) {
    const double el = radians(uniform(-opt.elevation_jitter_deg, opt.elevation_jitter_deg));
    const Vec3 dir(std::cos(radians(az)) * std::cos(el), std::sin(radians(az)) * std::cos(el), std::sin(el));
    sc.cameras.push_back(look_at(target + opt.camera_distance * dir, target, -f.mechanical));
  }

  // Planned plane normal: the mechanical axis tipped by CTR about AP and STR about ML.
  const double ctr = radians(uniform(-opt.max_tilt_deg, opt.max_tilt_deg));
  const double str = radians(uniform(-opt.max_tilt_deg, opt.max_tilt_deg));
  const Vec3 normal = Vec3(std::tan(ctr), std::tan(str), 1.0).normalized();
  const Vec3 axis = (f.anterior_posterior - f.anterior_posterior.dot(normal) * normal).normalized();
  const Vec3 across = normal.cross(axis).normalized();
  const double gap = uniform(opt.min_pin_gap, opt.max_pin_gap);
  const double shift = uniform(-4.0, 4.0);
  const Vec3 center(shift, 22.0 + uniform(-2.0, 2.0), opt.pin_height + uniform(-3.0, 3.0));
  for (int l = 0; l < kPinCount; ++l) {
    const double side = l == 0 ? -0.5 : 0.5;
    const Vec3 c = center + side * gap * across + uniform(-1.0, 1.0) * axis;
    sc.pins[l] = detail::pin_along(axis, normal, c);
    sc.ideal_pins[l] = detail::pin_along(f.anterior_posterior, f.mechanical,
                                         Vec3(center.x() + side * gap, center.y(), center.z()));
  }
  return sc;
}

struct Observations {
  ContourSet contours;
  /// Noise-free state: surface points whose projections are the clean contour.
  RegistrationState truth;
  /// Injected pixel offsets, in contour order (tibia, pin 1, pin 2 per image).
  std::vector<Vec2> offsets;
};

/// Silhouettes of the true poses, subsampled to the budget, plus isotropic
/// Gaussian pixel noise. Covariances are obs_sd^2 I (1 px^2 when noise-free).
inline Observations render_observations(const Scenario& sc, double obs_sd, std::uint64_t seed,
                                        const ContourBudget& budget = {}) {
  if (!(obs_sd >= 0.0)) throw Error(ErrorCode::kInvalidInput, "observation SD must be non-negative");
  std::mt19937_64 rng(mix_seed(seed, 0x0b5));
  std::normal_distribution<double> n(0.0, 1.0);
  const double var = obs_sd > 0.0 ? obs_sd * obs_sd : 1.0;
  const Mat2 cov = var * Mat2::Identity();
  const double lo = -0.5;
  auto noisy = [&](const Vec2& p, Observations& o) {
    const Vec2 d = obs_sd > 0.0 ? Vec2(obs_sd * n(rng), obs_sd * n(rng)) : Vec2::Zero();
    Vec2 q = p + d;
    q.x() = std::clamp(q.x(), lo, sc.camera.width - 0.5);
    q.y() = std::clamp(q.y(), lo, sc.camera.height - 0.5);
    o.offsets.push_back(q - p);
    return q;
  };
  Observations o;
  o.truth.pins = sc.pins;
  for (std::size_t k = 0; k < sc.cameras.size(); ++k) {
    const RigidPose& C = sc.cameras[k];
    o.truth.cameras.push_back(C);
    ImageContours im;
    im.camera_id = static_cast<int>(k);
    im.width = sc.camera.width;
    im.height = sc.camera.height;
    std::vector<Vec3> tp;
    for (const auto& p : extract_silhouette(sc.tibia, sc.camera, C, std::nullopt, {.max_points = budget.tibia}).points) {
      im.tibia.push_back(noisy(p.pixel, o));
      im.tibia_cov.push_back(cov);
      tp.push_back(p.surface);
    }
    o.truth.tibia_points.push_back(std::move(tp));
    std::array<std::vector<Vec3>, kPinCount> pp;
    for (int l = 0; l < kPinCount; ++l)
      for (const auto& p : extract_silhouette(sc.pin, sc.camera, C, sc.pins[l], {.max_points = budget.per_pin}).points) {
        im.pins[l].push_back(noisy(p.pixel, o));
        im.pin_cov[l].push_back(cov);
        pp[l].push_back(p.surface);
      }
    o.truth.pin_points.push_back(std::move(pp));
    o.contours.images.push_back(std::move(im));
  }
  return o;
}

/// Initialization noise of one simulation level.
struct NoiseSpec {
  double observation_sd = 2.0;  // px
  double rotation_sd = 0.0;     // rad, per tangent axis
  double translation_sd = 0.0;  // mm, per axis
  double point_sd = 0.0;        // mm, per axis

  void validate() const {
    if (!(observation_sd >= 0) || !(rotation_sd >= 0) || !(translation_sd >= 0) || !(point_sd >= 0))
      throw Error(ErrorCode::kInvalidInput, "noise SDs must be non-negative");
  }

  /// Level 1..5: 0.1 L rad, 20 L mm, 2 px. Level 0 is noise-free throughout.
  static NoiseSpec level(int L) {
    if (L < 0 || L > 5) throw Error(ErrorCode::kInvalidInput, "noise level must be in 0..5");
    if (L == 0) return {0.0, 0.0, 0.0, 0.0};
    return {2.0, 0.1 * L, 20.0 * L, 20.0 * L};
  }
};

/// Ground truth composed with exp of Gaussian tangents; points offset per axis
/// (pin points in their pin frame).
inline RegistrationState perturb_initialization(const RegistrationState& truth, const NoiseSpec& noise,
                                                std::uint64_t seed) {
  noise.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x1a17));
  std::normal_distribution<double> n(0.0, 1.0);
  RegistrationState s = truth;
  auto tangent = [&] {
    Vec6 d;
    for (int i = 0; i < 3; ++i) d[i] = noise.rotation_sd * n(rng);
    for (int i = 3; i < 6; ++i) d[i] = noise.translation_sd * n(rng);
    return d;
  };
  for (auto& c : s.cameras) c = retract(c, tangent());
  for (auto& m : s.pins) m = retract(m, tangent());
  auto offset = [&] { return Vec3(n(rng), n(rng), n(rng)) * noise.point_sd; };
  for (auto& v : s.tibia_points)
    for (auto& p : v) p += offset();
  for (auto& a : s.pin_points)
    for (auto& v : a)
      for (auto& p : v) p += offset();
  return s;
}

}  // namespace tka

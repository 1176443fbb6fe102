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

#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "tka/geom/silhouette.hpp"
#include "tka/synth/scene.hpp"

namespace tka {
namespace {

bool same_pose(const RigidPose& a, const RigidPose& b) {
  return a.rotation == b.rotation && a.translation == b.translation;
}

double pixel_to_polyline(const Vec2& q, const std::vector<Vec2>& poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const Vec2 d = b - a;
    // Consecutive samples from different components are far apart; fall back to the vertex.
    const double t = d.squaredNorm() > 0 && d.norm() < 3.0 ? std::clamp((q - a).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
    best = std::min(best, (a + t * d - q).norm());
  }
  return best;
}

TEST(Scene, DeterministicInSeed) {
  const auto a = generate_scene(5);
  const auto b = generate_scene(5);
  ASSERT_EQ(a.cameras.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_TRUE(same_pose(a.cameras[k], b.cameras[k]));
  for (int l = 0; l < kPinCount; ++l) EXPECT_TRUE(same_pose(a.pins[l], b.pins[l]));
  EXPECT_EQ(a.tibia.vertices(), b.tibia.vertices());
}

TEST(Scene, SeedsDiffer) {
  const auto a = generate_scene(0);
  const auto b = generate_scene(1);
  EXPECT_FALSE(same_pose(a.pins[0], b.pins[0]));
  EXPECT_FALSE(same_pose(a.cameras[0], b.cameras[0]));
}

TEST(Scene, GeometryWithinDocumentedRanges) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto sc = generate_scene(seed);
    const Vec3 z0 = sc.cameras[0].rotation.row(2).transpose();
    const Vec3 z1 = sc.cameras[1].rotation.row(2).transpose();
    const double sep = std::acos(std::clamp(z0.dot(z1), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    EXPECT_GT(sep, 25.0) << seed;
    EXPECT_LT(sep, 65.0) << seed;
    const Vec3 u = sc.pins[0].rotation.col(2);
    EXPECT_NEAR(u.dot(sc.pins[1].rotation.col(2)), 1.0, 1e-12) << seed;
    const Vec3 d = sc.pins[1].translation - sc.pins[0].translation;
    const double gap = (d - d.dot(u) * u).norm();
    EXPECT_GE(gap, 10.0) << seed;
    EXPECT_LE(gap, 30.0) << seed;
  }
}

TEST(Scene, AllSilhouettesOnScreen) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto sc = generate_scene(seed);
    for (const auto& C : sc.cameras) {
      std::vector<Silhouette> sils{extract_silhouette(sc.tibia, sc.camera, C)};
      for (const auto& M : sc.pins) sils.push_back(extract_silhouette(sc.pin, sc.camera, C, M));
      for (const auto& s : sils) {
        ASSERT_GT(s.size(), 50u) << seed;
        for (const auto& p : s.points) {
          EXPECT_GT(p.pixel.x(), 1.0);
          EXPECT_GT(p.pixel.y(), 1.0);
          EXPECT_LT(p.pixel.x(), sc.camera.width - 2.0);
          EXPECT_LT(p.pixel.y(), sc.camera.height - 2.0);
        }
      }
    }
  }
}

TEST(Observations, InjectedNoiseHasRequestedSd) {
  const auto sc = generate_scene(2);
  const auto o = render_observations(sc, 2.0, 11);
  ASSERT_GE(o.offsets.size(), 500u);
  double ss = 0;
  for (const auto& d : o.offsets) ss += d.squaredNorm();
  const double sd = std::sqrt(ss / (2.0 * o.offsets.size()));
  EXPECT_GE(sd, 1.8);
  EXPECT_LE(sd, 2.2);
  EXPECT_EQ(o.contours.images[0].tibia_cov[0], 4.0 * Mat2::Identity());
}

TEST(Observations, NoiseFreeLiesOnSilhouette) {
  const auto sc = generate_scene(3);
  const auto o = render_observations(sc, 0.0, 1);
  for (std::size_t k = 0; k < sc.cameras.size(); ++k) {
    const auto full = extract_silhouette(sc.tibia, sc.camera, sc.cameras[k], std::nullopt, {.max_points = 0}).pixels();
    for (const auto& q : o.contours.images[k].tibia) EXPECT_LE(pixel_to_polyline(q, full), 1.0);
    for (int l = 0; l < kPinCount; ++l) {
      const auto pin = extract_silhouette(sc.pin, sc.camera, sc.cameras[k], sc.pins[l], {.max_points = 0}).pixels();
      for (const auto& q : o.contours.images[k].pins[l]) EXPECT_LE(pixel_to_polyline(q, pin), 1.0);
    }
  }
  for (const auto& d : o.offsets) EXPECT_EQ(d, Vec2::Zero());
}

TEST(Observations, TruthPointsProjectOntoCleanContour) {
  const auto sc = generate_scene(4);
  const auto o = render_observations(sc, 0.0, 1);
  for (std::size_t k = 0; k < sc.cameras.size(); ++k) {
    const auto& im = o.contours.images[k];
    ASSERT_EQ(im.tibia.size(), o.truth.tibia_points[k].size());
    for (std::size_t i = 0; i < im.tibia.size(); ++i)
      EXPECT_LT((project_point(sc.camera, sc.cameras[k], o.truth.tibia_points[k][i]) - im.tibia[i]).norm(), 1e-9);
  }
}

TEST(Observations, DeterministicInSeed) {
  const auto sc = generate_scene(0);
  const auto a = render_observations(sc, 2.0, 9);
  const auto b = render_observations(sc, 2.0, 9);
  const auto c = render_observations(sc, 2.0, 10);
  EXPECT_EQ(a.contours.images[1].pins[1], b.contours.images[1].pins[1]);
  EXPECT_NE(a.contours.images[1].pins[1], c.contours.images[1].pins[1]);
}

TEST(Perturb, ZeroNoiseIsExact) {
  const auto sc = generate_scene(1);
  const auto o = render_observations(sc, 0.0, 1);
  const auto s = perturb_initialization(o.truth, NoiseSpec::level(0), 3);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_TRUE(same_pose(s.cameras[k], o.truth.cameras[k]));
  for (int l = 0; l < kPinCount; ++l) EXPECT_TRUE(same_pose(s.pins[l], o.truth.pins[l]));
  EXPECT_EQ(s.tibia_points, o.truth.tibia_points);
}

TEST(Perturb, RotationTangentMagnitude) {
  RegistrationState truth;
  truth.cameras.assign(2, RigidPose::identity());
  NoiseSpec n;
  n.rotation_sd = 0.1;
  double ss = 0;
  int count = 0;
  for (int draw = 0; draw < 250; ++draw) {
    const auto s = perturb_initialization(truth, n, draw);
    for (const auto* p : {&s.cameras[0], &s.cameras[1], &s.pins[0], &s.pins[1]}) {
      ss += so3_log(p->rotation).squaredNorm();
      ++count;
    }
  }
  ASSERT_EQ(count, 1000);
  EXPECT_NEAR(std::sqrt(ss / count), 0.1 * std::sqrt(3.0), 0.01 * std::sqrt(3.0));
}

TEST(Perturb, DeterministicInSeed) {
  const auto sc = generate_scene(0);
  const auto o = render_observations(sc, 2.0, 1);
  const auto a = perturb_initialization(o.truth, NoiseSpec::level(2), 5);
  const auto b = perturb_initialization(o.truth, NoiseSpec::level(2), 5);
  const auto c = perturb_initialization(o.truth, NoiseSpec::level(2), 6);
  EXPECT_EQ(a.pin_points, b.pin_points);
  EXPECT_TRUE(same_pose(a.cameras[1], b.cameras[1]));
  EXPECT_FALSE(same_pose(a.cameras[1], c.cameras[1]));
}

TEST(Noise, LevelsFollowSimulationProtocol) {
  for (int L = 1; L <= 5; ++L) {
    const auto n = NoiseSpec::level(L);
    EXPECT_DOUBLE_EQ(n.rotation_sd, 0.1 * L);
    EXPECT_DOUBLE_EQ(n.translation_sd, 20.0 * L);
    EXPECT_DOUBLE_EQ(n.point_sd, n.translation_sd);
    EXPECT_DOUBLE_EQ(n.observation_sd, 2.0);
  }
  EXPECT_THROW(NoiseSpec::level(6), Error);
  NoiseSpec bad;
  bad.point_sd = -1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Seeds, MixSeedSeparatesTuples) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 5; ++a)
    for (std::uint64_t b = 0; b < 10; ++b)
      for (std::uint64_t c = 0; c < 3; ++c) seen.insert(mix_seed(a, b, c));
  EXPECT_EQ(seen.size(), 150u);
}

}  // namespace
}  // namespace tka

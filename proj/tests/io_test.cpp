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

#include <filesystem>

#include <gtest/gtest.h>

#include "tka/io/formats.hpp"
#include "tka/overlay.hpp"
#include "tka/pipeline.hpp"

namespace tka {
namespace {

template <class T, class F>
T round_trip(const T& value, F&& parse) {
  const io::Json j = io::Json::parse(io::to_json(value).dump());
  return parse(io::Node(j, "mem"));
}

TEST(Json, StateRoundTripsExactly) {
  const SimulatedCase c = simulate_case(7, 2, {60, 20});
  const RegistrationState s = round_trip(c.initial, io::state_from);
  ASSERT_EQ(s.image_count(), c.initial.image_count());
  for (std::size_t k = 0; k < s.image_count(); ++k) {
    // Rotations are re-orthonormalized on read; a proper rotation survives to round-off.
    EXPECT_LT((s.cameras[k].rotation - c.initial.cameras[k].rotation).norm(), 1e-12);
    EXPECT_EQ(s.cameras[k].translation, c.initial.cameras[k].translation);
    EXPECT_EQ(s.tibia_points[k], c.initial.tibia_points[k]);
    for (int l = 0; l < kPinCount; ++l) EXPECT_EQ(s.pin_points[k][l], c.initial.pin_points[k][l]);
  }
}

TEST(Json, ContoursRoundTripWithCovariances) {
  const SimulatedCase c = simulate_case(3, 1, {50, 10});
  const ContourSet s = round_trip(c.observations.contours, io::contours_from);
  ASSERT_EQ(s.image_count(), 2u);
  EXPECT_EQ(s.images[1].tibia, c.observations.contours.images[1].tibia);
  EXPECT_EQ(s.images[0].pin_cov[1], c.observations.contours.images[0].pin_cov[1]);
}

TEST(Json, MissingCovariancesDefaultToTwoPixels) {
  io::Json j = io::to_json(simulate_case(3, 1, {50, 10}).observations.contours);
  j["images"][0].erase("tibia_cov");
  const ContourSet s = io::contours_from(io::Node(j, "mem"));
  EXPECT_EQ(s.images[0].tibia_cov[0], (4.0 * Mat2::Identity()).eval());
}

TEST(Json, ViolationsNameFileAndPath) {
  io::Json j = io::to_json(PinholeCamera{});
  j["width"] = "wide";
  try {
    io::intrinsics_from(io::Node(j, "cam.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).find("cam.json: width: expected an integer") != std::string::npos, true)
        << e.what();
  }
  j = io::to_json(PinholeCamera{});
  j["schema"] = "intrinsics/9";
  EXPECT_THROW(io::intrinsics_from(io::Node(j, "cam.json")), Error);
}

TEST(Json, NonRotationPoseIsRejected) {
  io::Json j = io::to_json(RigidPose{});
  j["rotation"][0][0] = 2.0;
  EXPECT_THROW(io::pose_from(io::Node(j, "p")), Error);
  j = io::to_json(RigidPose{});
  j["rotation"][2][2] = -1.0;  // reflection
  j["rotation"][1][1] = 1.0;
  j["rotation"][0][0] = 1.0;
  EXPECT_THROW(io::pose_from(io::Node(j, "p")), Error);
}

TEST(Json, AnatomyConventionIsChecked) {
  io::Json j = io::to_json(io::Anatomy{});
  EXPECT_NO_THROW(io::anatomy_from(io::Node(j, "a")));
  j["convention"] = "ras";
  EXPECT_THROW(io::anatomy_from(io::Node(j, "a")), Error);
}

TEST(InitialState, PointsLieOnObservedRaysAtTheGivenDepth) {
  const SimulatedCase c = simulate_case(1, 1, {40, 10});
  io::InitialPoses poses;
  poses.cameras = c.scene.cameras;
  poses.depth = 480.0;
  const io::Anatomy an{c.scene.frame, c.scene.ideal_pins};
  const RegistrationState s = io::initial_state(poses, an, c.observations.contours, c.scene.camera);
  EXPECT_NO_THROW(s.check_matches(c.observations.contours));
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& im = c.observations.contours.images[k];
    for (std::size_t i = 0; i < im.tibia.size(); ++i) {
      const Vec3 x = s.cameras[k].apply(s.tibia_points[k][i]);
      EXPECT_NEAR(x.z(), 480.0, 1e-9);
      EXPECT_LT((c.scene.camera.project_camera_frame(x) - im.tibia[i]).norm(), 1e-9);
    }
    const Vec3 y = s.cameras[k].apply(s.pins[1].apply(s.pin_points[k][1][0]));
    EXPECT_NEAR(y.z(), 480.0, 1e-9);
  }
  poses.cameras.pop_back();
  EXPECT_THROW(io::initial_state(poses, an, c.observations.contours, c.scene.camera), Error);
}

TEST(Overlay, DistanceIsZeroForIdenticalLayersAndGrowsWithShift) {
  OverlayLayers L;
  for (int i = 0; i < 50; ++i) L.observed.emplace_back(100.0 + i, 200.0);
  L.silhouette = L.observed;
  EXPECT_EQ(overlay_distance(L), 0.0);
  for (auto& p : L.silhouette) p.y() += 5.0;
  EXPECT_DOUBLE_EQ(overlay_distance(L), 5.0);
  L.silhouette.clear();
  EXPECT_TRUE(std::isinf(overlay_distance(L)));
}

TEST(Overlay, RenderingClipsAtTheBorder) {
  OverlayLayers L;
  L.observed = {Vec2(-3, -3), Vec2(0, 0), Vec2(9.4, 9.6)};
  const RgbImage img = render_overlay(L, 10, 10);
  EXPECT_EQ(img.rgb[0], kObservedColor[0]);
  EXPECT_EQ(img.rgb[3 * (9 * 10 + 9) + 1], kObservedColor[1]);
  EXPECT_EQ(img.rgb[3 * (5 * 10 + 5)], 0);
}

}  // namespace
}  // namespace tka

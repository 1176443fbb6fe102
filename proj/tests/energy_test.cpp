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

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "finite_diff.hpp"
#include "oracles.hpp"
#include "scene.hpp"
#include "tka/energy/terms.hpp"
#include "tka/geom/primitives.hpp"

namespace tka {
namespace {

using test::frozen_residual;
using test::make_scene;
using test::nudge;

EnergyOptions only(double rp, double bp, double mp) {
  EnergyOptions o;
  o.weights = {rp, bp, mp};
  return o;
}

// Moves every pose and point a little so that all three terms are non-trivial.
RegistrationState jitter(const RegistrationState& s, unsigned seed, double rot, double trans, double pt) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RegistrationState out = s;
  auto tangent = [&] {
    Vec6 d;
    for (int i = 0; i < 3; ++i) d[i] = rot * n(rng);
    for (int i = 3; i < 6; ++i) d[i] = trans * n(rng);
    return d;
  };
  for (auto& c : out.cameras) c = retract(c, tangent());
  for (auto& m : out.pins) m = retract(m, tangent());
  for (auto& v : out.tibia_points)
    for (auto& p : v) p += pt * Vec3(n(rng), n(rng), n(rng));
  for (auto& a : out.pin_points)
    for (auto& v : a)
      for (auto& p : v) p += pt * Vec3(n(rng), n(rng), n(rng));
  return out;
}

TEST(Reprojection, WhiteningOfTwoPixelError) {
  auto s = make_scene(20, 6);
  s.obs.images[0].tibia[0] += Vec2(2.0, 0.0);
  const auto blocks = residuals_reprojection(s.truth, s.inputs(), only(1, 0, 0));
  ASSERT_EQ(blocks.front().kind, BlockKind::kReprojTibia);
  EXPECT_NEAR(blocks.front().residual[0], 2.0, 1e-6);
  EXPECT_NEAR(blocks.front().whitened()[0], 1.0, 1e-6);
  EXPECT_NEAR(blocks.front().whitened()[1], 0.0, 1e-6);
}

TEST(Reprojection, BackProjectedPointsGiveZeroResiduals) {
  auto s = make_scene(30, 10);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> depth(100.0, 2000.0);
  for (std::size_t k = 0; k < s.obs.image_count(); ++k) {
    const RigidPose& C = s.truth.cameras[k];
    for (std::size_t i = 0; i < s.obs.images[k].tibia.size(); ++i)
      s.truth.tibia_points[k][i] = back_project(s.camera, C, s.obs.images[k].tibia[i], depth(rng));
    for (int l = 0; l < kPinCount; ++l)
      for (std::size_t j = 0; j < s.obs.images[k].pins[l].size(); ++j)
        s.truth.pin_points[k][l][j] = s.truth.pins[l].apply_inverse(
            back_project(s.camera, C, s.obs.images[k].pins[l][j], depth(rng)));
  }
  const auto blocks = residuals_reprojection(s.truth, s.inputs(), only(1, 0, 0));
  ASSERT_EQ(blocks.size(), s.obs.point_count());
  for (const auto& b : blocks) {
    ASSERT_EQ(b.residual.size(), 2);
    ASSERT_LT(b.residual.norm(), 1e-8);
  }
}

TEST(Reprojection, PerturbingOnePointTouchesOnlyItsBlock) {
  auto s = make_scene(20, 6);
  const auto before = residuals_reprojection(s.truth, s.inputs(), only(1, 0, 0));
  s.truth.tibia_points[1][3] += Vec3(1.0, -2.0, 0.5);
  const auto after = residuals_reprojection(s.truth, s.inputs(), only(1, 0, 0));
  ASSERT_EQ(before.size(), after.size());
  int changed = 0;
  for (std::size_t b = 0; b < before.size(); ++b) {
    if (before[b].residual != after[b].residual) {
      ++changed;
      EXPECT_EQ(after[b].image, 1);
      EXPECT_EQ(after[b].index, 3);
      EXPECT_EQ(after[b].kind, BlockKind::kReprojTibia);
    }
  }
  EXPECT_EQ(changed, 1);
}

TEST(Reprojection, StrictModeRejectsPointsBehindCamera) {
  auto s = make_scene(20, 6);
  s.truth.tibia_points[0][0] = s.truth.cameras[0].apply_inverse(Vec3(0, 0, -10));
  auto o = only(1, 0, 0);
  std::vector<std::string> warnings;
  const auto blocks = residuals_reprojection(s.truth, s.inputs(), o, false, &warnings);
  EXPECT_EQ(blocks.size(), s.obs.point_count() - 1);
  EXPECT_EQ(warnings.size(), 1u);
  o.strict_depth = true;
  try {
    residuals_reprojection(s.truth, s.inputs(), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonPositiveDepth);
    EXPECT_NE(std::string(e.what()).find("image 0"), std::string::npos);
  }
}

TEST(Backprojection, SurfacePointsGiveZeroBlocks) {
  const auto s = make_scene(40, 12);
  const auto blocks = residuals_backprojection(s.truth, s.inputs(), only(0, 1, 0));
  ASSERT_EQ(blocks.size(), s.obs.point_count());
  for (const auto& b : blocks) {
    ASSERT_EQ(b.residual.size(), 3);
    ASSERT_LT(b.residual.norm(), 1e-9);
  }
}

TEST(Backprojection, PlanarFaceOffset) {
  // Tibia mesh replaced by a large box; one point 5 mm in front of its +x face.
  auto s = make_scene(4, 2);
  s.tibia = primitives::box(Vec3(100, 100, 100));
  for (auto& v : s.truth.tibia_points)
    for (auto& p : v) p = Vec3(100, 0, 0);
  s.truth.tibia_points[0][0] = Vec3(105, 10, -20);
  const auto blocks = residuals_backprojection(s.truth, s.inputs(), only(0, 1, 0));
  ASSERT_EQ(blocks.front().kind, BlockKind::kBackprojTibia);
  EXPECT_LT((blocks.front().residual - Vec3(5, 0, 0)).norm(), 1e-12);
  EXPECT_LT((blocks.front().whitened() - Vec3(5, 0, 0)).norm(), 1e-12);
}

TEST(Backprojection, MatchesBruteForceOracle) {
  auto s = make_scene(30, 10);
  s.tibia = primitives::icosphere(60.0, 3, Vec3(0, 0, -40));
  ASSERT_GE(s.tibia.triangle_count(), 1000u);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-120.0, 120.0);
  for (auto& v : s.truth.tibia_points)
    for (auto& p : v) p = Vec3(u(rng), u(rng), u(rng) - 40);
  for (auto& a : s.truth.pin_points)
    for (auto& v : a)
      for (auto& p : v) p = Vec3(u(rng) / 20, u(rng) / 20, u(rng) / 2);
  const auto blocks = residuals_backprojection(s.truth, s.inputs(), only(0, 1, 0));
  std::size_t b = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    for (const auto& p : s.truth.tibia_points[k]) {
      const auto o = oracle::brute_force_closest(s.tibia, p);
      ASSERT_NEAR(blocks[b++].residual.norm(), o.distance, 1e-9);
    }
    for (int l = 0; l < kPinCount; ++l)
      for (const auto& p : s.truth.pin_points[k][l]) {
        const auto o = oracle::brute_force_closest(s.pin, p);
        ASSERT_LT((blocks[b++].residual - (p - o.point)).norm(), 1e-9);
      }
  }
  EXPECT_EQ(b, blocks.size());
}

TEST(Backprojection, EmptyMeshThrows) {
  auto s = make_scene(4, 2);
  s.pin = TriangleMesh({}, {});
  try {
    residuals_backprojection(s.truth, s.inputs(), only(0, 1, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMesh);
  }
}

TEST(Modelprojection, GroundTruthSilhouetteWithinOnePixel) {
  const auto s = make_scene(0, 0);
  const auto blocks = residuals_modelprojection(s.truth, s.inputs(), only(0, 0, 1));
  ASSERT_GT(blocks.size(), 1000u);
  for (const auto& b : blocks) {
    ASSERT_EQ(b.residual.size(), 1);
    ASSERT_LT(b.residual[0], 1.0);
  }
}

TEST(Modelprojection, ShiftedStraightEdgeGivesThreePixels) {
  // A box seen face-on: vertical silhouette edges against the same contour shifted by 3 px.
  auto s = make_scene(4, 2);
  s.tibia = primitives::box(Vec3(30, 30, 60));
  const RigidPose C = look_at(Vec3(500, 0, 0), Vec3::Zero(), Vec3(0, 0, -1));
  s.truth.cameras = {C, C};
  const auto sil = extract_silhouette(s.tibia, s.camera, C, std::nullopt, {.max_points = 0});
  for (auto& im : s.obs.images) {
    im.tibia.clear();
    im.tibia_cov.clear();
    for (const auto& p : sil.points) {
      im.tibia.push_back(p.pixel + Vec2(3, 0));
      im.tibia_cov.push_back(4.0 * Mat2::Identity());
    }
  }
  s.truth.tibia_points = {std::vector<Vec3>(sil.size()), std::vector<Vec3>(sil.size())};
  auto o = only(0, 0, 1);
  o.include_pins = false;
  const auto blocks = residuals_modelprojection(s.truth, s.inputs(), o);
  const double half_h = s.camera.fy * 60.0 / 530.0;  // near face is at depth 470, far at 530
  int interior = 0;
  const auto assoc = associate(s.truth, s.inputs(), o);
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    const Vec3& surface = assoc.tibia_model[blocks[m].image][blocks[m].index].surface;
    const Vec2 px = project_point(s.camera, C, surface);
    if (std::abs(px.y() - s.camera.cy) > half_h - 10.0) continue;
    ++interior;
    EXPECT_NEAR(blocks[m].residual[0], 3.0, 0.5);
  }
  EXPECT_GT(interior, 50);
}

TEST(Modelprojection, EmptyPinContourWarnsAndContributesNothing) {
  auto s = make_scene(20, 8);
  s.obs.images[1].pins[0].clear();
  s.obs.images[1].pin_cov[0].clear();
  s.truth.pin_points[1][0].clear();
  std::vector<std::string> warnings;
  const auto blocks = residuals_modelprojection(s.truth, s.inputs(), only(0, 0, 1), false, &warnings);
  for (const auto& b : blocks) EXPECT_FALSE(b.image == 1 && b.pin == 0 && b.kind == BlockKind::kModelprojPin);
  EXPECT_TRUE(std::any_of(blocks.begin(), blocks.end(),
                          [](const auto& b) { return b.image == 0 && b.pin == 0; }));
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("pin 1"), std::string::npos);
}

TEST(Modelprojection, OffScreenNamesTheImage) {
  auto s = make_scene(10, 4);
  s.truth.pins[1].translation.x() += 5000.0;
  try {
    residuals_modelprojection(s.truth, s.inputs(), only(0, 0, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOffScreen);
    EXPECT_NE(std::string(e.what()).find("image 0 pin 2"), std::string::npos);
  }
}

TEST(TotalEnergy, GroundTruthIsMinimal) {
  const auto s = make_scene(60, 20);
  EXPECT_LT(total_energy(s.truth, s.inputs(), only(1, 1, 0)).total, 1e-12);
  const auto e = total_energy(s.truth, s.inputs(), only(1, 1, 1));
  EXPECT_LT(e.reprojection + e.backprojection, 1e-12);
  EXPECT_GE(e.modelprojection, 0.0);
}

TEST(TotalEnergy, AllZeroWeightsRejected) {
  const auto s = make_scene(10, 4);
  try {
    total_energy(s.truth, s.inputs(), only(0, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidInput);
  }
  EXPECT_THROW(total_energy(s.truth, s.inputs(), only(1, -1, 0)), Error);
}

TEST(TotalEnergy, InvariantToObservationOrder) {
  const auto s = make_scene(60, 20);
  const auto state = jitter(s.truth, 5, 0.002, 0.5, 0.5);
  auto p = s;
  p.truth = state;
  std::mt19937_64 rng(9);
  for (std::size_t k = 0; k < p.obs.image_count(); ++k) {
    auto& im = p.obs.images[k];
    std::vector<std::size_t> order(im.tibia.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    auto t = im.tibia;
    auto pts = p.truth.tibia_points[k];
    for (std::size_t i = 0; i < order.size(); ++i) {
      im.tibia[i] = t[order[i]];
      p.truth.tibia_points[k][i] = pts[order[i]];
    }
    std::reverse(im.pins[1].begin(), im.pins[1].end());
    std::reverse(p.truth.pin_points[k][1].begin(), p.truth.pin_points[k][1].end());
  }
  const auto o = only(1, 1, 1);
  const double a = total_energy(state, s.inputs(), o).total;
  const double b = total_energy(p.truth, p.inputs(), o).total;
  EXPECT_NEAR(a, b, 1e-9 * a);
}

TEST(TotalEnergy, EqualsSumOfIndependentTerms) {
  const auto s = make_scene(60, 20);
  const auto state = jitter(s.truth, 7, 0.003, 1.0, 0.8);
  const EnergyWeights w{0.7, 1.3, 2.1};
  EnergyOptions o;
  o.weights = w;
  const double total = total_energy(state, s.inputs(), o).total;
  auto sum = [](const std::vector<ResidualBlock>& v) {
    double e = 0.0;
    for (const auto& b : v) e += b.squared_norm();
    return e;
  };
  const double rp = sum(residuals_reprojection(state, s.inputs(), o));
  const double bp = sum(residuals_backprojection(state, s.inputs(), o));
  const double mp = sum(residuals_modelprojection(state, s.inputs(), o));
  ASSERT_GT(rp * bp * mp, 0.0);
  EXPECT_NEAR(total, w.reprojection * rp + w.backprojection * bp + w.modelprojection * mp, 1e-12 * total);
}

TEST(TotalEnergy, DoublingCovariancesHalvesWhitenedSquares) {
  auto s = make_scene(40, 12);
  const auto state = jitter(s.truth, 8, 0.003, 1.0, 0.8);
  EnergyOptions o;
  const auto assoc = associate(state, s.inputs(), o);
  const auto a = residual_blocks(state, assoc, s.inputs(), o, false);
  for (auto& im : s.obs.images) {
    for (auto& c : im.tibia_cov) c *= 2.0;
    for (auto& v : im.pin_cov)
      for (auto& c : v) c *= 2.0;
  }
  o.point_sigma *= std::sqrt(2.0);
  o.contour_sigma *= std::sqrt(2.0);
  const auto b = residual_blocks(state, assoc, s.inputs(), o, false);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i].squared_norm();
    ASSERT_NEAR(b[i].squared_norm(), 0.5 * x, 1e-12 * x + 1e-300);
  }
}

TEST(TotalEnergy, RepeatedEvaluationIsBitIdentical) {
  const auto s = make_scene(60, 20);
  const auto state = jitter(s.truth, 9, 0.003, 1.0, 0.8);
  const EnergyOptions o;
  const auto a = jacobian(state, s.inputs(), o);
  const auto b = jacobian(state, s.inputs(), o);
  ASSERT_EQ(a.residual.size(), b.residual.size());
  for (Eigen::Index i = 0; i < a.residual.size(); ++i) ASSERT_EQ(a.residual[i], b.residual[i]);
  ASSERT_EQ(a.jacobian.nonZeros(), b.jacobian.nonZeros());
  for (Eigen::Index i = 0; i < a.jacobian.nonZeros(); ++i)
    ASSERT_EQ(a.jacobian.valuePtr()[i], b.jacobian.valuePtr()[i]);
  EXPECT_EQ(total_energy(state, s.inputs(), o).total, total_energy(state, s.inputs(), o).total);
}

TEST(Jacobian, MatchesCentralFiniteDifferences) {
  // 2 images x (15 tibia + 2 x 5 pin) = 50 points.
  const auto s = make_scene(15, 5);
  ASSERT_EQ(s.obs.point_count(), 50u);
  const auto state = jitter(s.truth, 21, 0.004, 1.5, 1.0);
  EnergyOptions o;
  o.weights = {1.0, 0.8, 1.2};
  o.max_silhouette_points = 40;
  const auto in = s.inputs();
  const auto assoc = associate(state, in, o);
  const auto sys = stack(residual_blocks(state, assoc, in, o, true), StateLayout(state));
  const Eigen::MatrixXd J(sys.jacobian);
  ASSERT_EQ(static_cast<std::size_t>(J.cols()), 6 * 2 + 12 + 3 * 50u);
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index c = 0; c < J.cols(); ++c) {
    const auto col = static_cast<std::size_t>(c);
    const Eigen::VectorXd fd = (frozen_residual(nudge(state, col, h), assoc, in, o) -
                                frozen_residual(nudge(state, col, -h), assoc, in, o)) / (2 * h);
    const double err = (fd - J.col(c)).norm() / std::max(1.0, J.col(c).norm());
    worst = std::max(worst, err);
    ASSERT_LT(err, 1e-4) << "column " << c;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Jacobian, PointColumnsAreLocal) {
  const auto s = make_scene(15, 5);
  const auto state = jitter(s.truth, 22, 0.003, 1.0, 1.0);
  const EnergyOptions o;
  const auto assoc = associate(state, s.inputs(), o);
  const auto blocks = residual_blocks(state, assoc, s.inputs(), o, true);
  const StateLayout L(state);
  const auto sys = stack(blocks, L);
  const Eigen::MatrixXd J(sys.jacobian);
  const std::size_t col = L.tibia_point(1, 4);
  Eigen::Index row = 0;
  int touching = 0;
  for (const auto& b : blocks) {
    const bool mine = std::any_of(b.slots.begin(), b.slots.end(), [](const Slot& sl) {
      return sl.kind == SlotKind::kTibiaPoint && sl.image == 1 && sl.index == 4;
    });
    for (Eigen::Index r = 0; r < b.residual.size(); ++r, ++row) {
      const double v = J.block(row, static_cast<Eigen::Index>(col), 1, 3).norm();
      if (!mine) ASSERT_EQ(v, 0.0);
    }
    touching += mine;
  }
  EXPECT_EQ(touching, 2);  // its re-projection and back-projection blocks
}

TEST(Jacobian, GradientVanishesAtGroundTruth) {
  const auto s = make_scene(60, 20);
  const auto sys = jacobian(s.truth, s.inputs(), only(1, 1, 0));
  const Eigen::VectorXd g = sys.jacobian.transpose() * sys.residual;
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(static_cast<std::size_t>(sys.jacobian.cols()), 6 * 2 + 12 + 3 * s.obs.point_count());
}

}  // namespace
}  // namespace tka

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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tka/energy/contours.hpp"
#include "tka/energy/state.hpp"
#include "tka/error.hpp"
#include "tka/geom/camera.hpp"
#include "tka/geom/mesh.hpp"
#include "tka/geom/point_index.hpp"
#include "tka/geom/silhouette.hpp"

namespace tka {

struct EnergyWeights {
  double reprojection = 1.0;
  double backprojection = 1.0;
  double modelprojection = 1.0;

  void validate() const {
    if (!(reprojection >= 0.0) || !(backprojection >= 0.0) || !(modelprojection >= 0.0))
      throw Error(ErrorCode::kInvalidInput, "energy weights must be non-negative");
    if (reprojection == 0.0 && backprojection == 0.0 && modelprojection == 0.0)
      throw Error(ErrorCode::kInvalidInput, "at least one energy weight must be positive");
  }
};

struct EnergyOptions {
  EnergyWeights weights;
  /// Isotropic SD of the surface-distance residual, mm.
  double point_sigma = 1.0;
  /// SD of the silhouette-to-contour distance, px.
  double contour_sigma = 2.0;
  std::size_t max_silhouette_points = 400;
  bool include_tibia = true;
  bool include_pins = true;
  /// Throw NonPositiveDepth instead of dropping the block with a warning.
  bool strict_depth = false;
};

/// Read-only inputs shared by every evaluation.
struct ProblemInputs {
  const TriangleMesh& tibia;
  const TriangleMesh& pin;
  const PinholeCamera& camera;
  const ContourSet& contours;
};

enum class BlockKind {
  kReprojTibia,
  kReprojPin,
  kBackprojTibia,
  kBackprojPin,
  kModelprojTibia,
  kModelprojPin,
};

enum class SlotKind { kCamera, kPin, kTibiaPoint, kPinPoint };

struct Slot {
  SlotKind kind;
  int image = -1;
  int pin = -1;
  int index = -1;
};

/// One whitened residual term. `residual` is raw (px or mm); the energy
/// contribution is weight * |whitening * residual|^2.
struct ResidualBlock {
  BlockKind kind;
  int image = -1;
  int pin = -1;
  int index = -1;
  Eigen::VectorXd residual;
  Eigen::MatrixXd whitening;
  double weight = 1.0;
  std::vector<Slot> slots;
  /// d residual / d slot, one per slot; empty unless requested.
  std::vector<Eigen::MatrixXd> jacobians;

  Eigen::VectorXd whitened() const { return whitening * residual; }
  double squared_norm() const { return whitened().squaredNorm(); }
};

/// Frozen correspondences of one evaluation: closest surface points for the
/// back-projection term, silhouette samples and their nearest observed contour
/// point for the model-projection term.
struct ModelCorrespondence {
  Vec3 surface;  // mesh frame
  int contour = -1;
};

struct Associations {
  std::vector<std::vector<Vec3>> tibia_closest;
  std::vector<std::array<std::vector<Vec3>, kPinCount>> pin_closest;
  std::vector<std::vector<ModelCorrespondence>> tibia_model;
  std::vector<std::array<std::vector<ModelCorrespondence>, kPinCount>> pin_model;
  bool has_closest = false;
  bool has_model = false;
  std::vector<std::string> warnings;
};

struct EnergyBreakdown {
  double reprojection = 0.0;     // unweighted sums of whitened squares
  double backprojection = 0.0;
  double modelprojection = 0.0;
  double total = 0.0;            // weighted
};

namespace detail {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

// d(pose * exp(delta) * p)/d(delta) at delta = 0, rotation part first.
inline Mat36 pose_point_jacobian(const RigidPose& pose, const Vec3& p) {
  Mat36 J;
  J.leftCols<3>() = -pose.rotation * skew(p);
  J.rightCols<3>() = pose.rotation;
  return J;
}

inline std::string where(int image, int pin, int index) {
  std::string s = "image " + std::to_string(image);
  if (pin >= 0) s += " pin " + std::to_string(pin + 1);
  if (index >= 0) s += " point " + std::to_string(index);
  return s;
}

inline void compute_model_correspondences(const TriangleMesh& mesh, const PinholeCamera& cam,
                                          const RigidPose& camera_pose,
                                          const std::optional<RigidPose>& pin_pose,
                                          const std::vector<Vec2>& observed,
                                          const EnergyOptions& options, int image, int pin,
                                          std::vector<ModelCorrespondence>& out,
                                          std::vector<std::string>& warnings) {
  out.clear();
  if (observed.empty()) {
    warnings.push_back("empty observed contour for " + where(image, pin, -1) +
                       "; no model-projection terms");
    return;
  }
  Silhouette sil;
  try {
    sil = extract_silhouette(mesh, cam, camera_pose, pin_pose,
                             {.max_points = options.max_silhouette_points});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kOffScreen)
      throw Error(ErrorCode::kOffScreen, where(image, pin, -1) + ": mesh projects off-screen");
    throw;
  }
  const PointIndex2D index(observed);
  out.reserve(sil.size());
  for (const auto& p : sil.points) out.push_back({p.surface, index.nearest(p.pixel).index});
}

}  // namespace detail

/// Recomputes every correspondence needed by the enabled terms at `state`.
inline Associations associate(const RegistrationState& state, const ProblemInputs& in,
                              const EnergyOptions& options) {
  Associations a;
  const std::size_t n = state.image_count();
  auto match = [](const TriangleMesh& mesh, const Vec3& P) { return mesh.closest_point(P).point; };
  if (options.weights.backprojection > 0.0) {
    a.has_closest = true;
    a.tibia_closest.resize(n);
    a.pin_closest.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (options.include_tibia) {
        for (const auto& P : state.tibia_points[k]) a.tibia_closest[k].push_back(match(in.tibia, P));
      }
      if (options.include_pins) {
        for (int l = 0; l < kPinCount; ++l)
          for (const auto& P : state.pin_points[k][l]) a.pin_closest[k][l].push_back(match(in.pin, P));
      }
    }
  }
  if (options.weights.modelprojection > 0.0) {
    a.has_model = true;
    a.tibia_model.resize(n);
    a.pin_model.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& im = in.contours.images[k];
      const int ik = static_cast<int>(k);
      if (options.include_tibia) {
        detail::compute_model_correspondences(in.tibia, in.camera, state.cameras[k], std::nullopt,
                                              im.tibia, options, ik, -1, a.tibia_model[k], a.warnings);
      }
      if (options.include_pins) {
        for (int l = 0; l < kPinCount; ++l)
          detail::compute_model_correspondences(in.pin, in.camera, state.cameras[k], state.pins[l],
                                                im.pins[l], options, ik, l, a.pin_model[k][l],
                                                a.warnings);
      }
    }
  }
  return a;
}

/// Contour re-projection blocks (2-D, px), whitened by the observation covariance.
inline std::vector<ResidualBlock> residuals_reprojection(const RegistrationState& state,
                                                         const ProblemInputs& in,
                                                         const EnergyOptions& options,
                                                         bool with_jacobians = false,
                                                         std::vector<std::string>* warnings = nullptr) {
  state.check_matches(in.contours);
  std::vector<ResidualBlock> out;
  const double w = options.weights.reprojection;
  const auto& cam = in.camera;
  auto push = [&](BlockKind kind, int k, int l, int i, const Vec2& obs, const Mat2& cov,
                  const Vec3& x) -> ResidualBlock* {
    if (!(x.z() > kMinDepth)) {
      if (options.strict_depth)
        throw Error(ErrorCode::kNonPositiveDepth, detail::where(k, l, i) + " at depth " + std::to_string(x.z()));
      if (warnings) warnings->push_back("dropped re-projection block at " + detail::where(k, l, i) + " (depth)");
      return nullptr;
    }
    ResidualBlock b;
    b.kind = kind;
    b.image = k;
    b.pin = l;
    b.index = i;
    b.residual = obs - cam.project_camera_frame(x);
    b.whitening = inverse_sqrt(cov);
    b.weight = w;
    out.push_back(std::move(b));
    return &out.back();
  };
  for (std::size_t k = 0; k < state.image_count(); ++k) {
    const int ik = static_cast<int>(k);
    const auto& im = in.contours.images[k];
    const RigidPose& C = state.cameras[k];
    if (options.include_tibia) {
      for (std::size_t i = 0; i < im.tibia.size(); ++i) {
        const Vec3& P = state.tibia_points[k][i];
        const Vec3 x = C.apply(P);
        ResidualBlock* b = push(BlockKind::kReprojTibia, ik, -1, static_cast<int>(i), im.tibia[i], im.tibia_cov[i], x);
        if (!b) continue;
        b->slots = {{SlotKind::kCamera, ik}, {SlotKind::kTibiaPoint, ik, -1, static_cast<int>(i)}};
        if (with_jacobians) {
          const detail::Mat23 Jp = -cam.projection_jacobian(x);
          b->jacobians = {Jp * detail::pose_point_jacobian(C, P), Jp * C.rotation};
        }
      }
    }
    if (options.include_pins) {
      for (int l = 0; l < kPinCount; ++l) {
        const RigidPose& M = state.pins[l];
        for (std::size_t j = 0; j < im.pins[l].size(); ++j) {
          const Vec3& P = state.pin_points[k][l][j];
          const Vec3 y = M.apply(P);
          const Vec3 x = C.apply(y);
          ResidualBlock* b = push(BlockKind::kReprojPin, ik, l, static_cast<int>(j), im.pins[l][j], im.pin_cov[l][j], x);
          if (!b) continue;
          b->slots = {{SlotKind::kCamera, ik}, {SlotKind::kPin, -1, l}, {SlotKind::kPinPoint, ik, l, static_cast<int>(j)}};
          if (with_jacobians) {
            const detail::Mat23 Jp = -cam.projection_jacobian(x);
            b->jacobians = {Jp * detail::pose_point_jacobian(C, y),
                            Jp * C.rotation * detail::pose_point_jacobian(M, P),
                            Jp * C.rotation * M.rotation};
          }
        }
      }
    }
  }
  return out;
}

/// Back-projection blocks (3-D, mm): state point minus its closest surface point,
/// tibia points against the tibia mesh, pin points against the pin mesh in the pin frame.
inline std::vector<ResidualBlock> residuals_backprojection(const RegistrationState& state,
                                                           const Associations& assoc,
                                                           const ProblemInputs& in,
                                                           const EnergyOptions& options,
                                                           bool with_jacobians = false) {
  if (!assoc.has_closest) throw Error(ErrorCode::kInvalidInput, "associations lack closest points");
  std::vector<ResidualBlock> out;
  const Eigen::MatrixXd W = Eigen::Matrix3d::Identity() / options.point_sigma;
  auto push = [&](BlockKind kind, int k, int l, int i, const Vec3& P, const Vec3& c, Slot slot) {
    ResidualBlock b;
    b.kind = kind;
    b.image = k;
    b.pin = l;
    b.index = i;
    b.residual = P - c;
    b.whitening = W;
    b.weight = options.weights.backprojection;
    b.slots = {slot};
    if (with_jacobians) b.jacobians = {Eigen::Matrix3d::Identity()};
    out.push_back(std::move(b));
  };
  for (std::size_t k = 0; k < state.image_count(); ++k) {
    const int ik = static_cast<int>(k);
    if (options.include_tibia) {
      for (std::size_t i = 0; i < state.tibia_points[k].size(); ++i)
        push(BlockKind::kBackprojTibia, ik, -1, static_cast<int>(i), state.tibia_points[k][i],
             assoc.tibia_closest[k][i], {SlotKind::kTibiaPoint, ik, -1, static_cast<int>(i)});
    }
    if (options.include_pins) {
      for (int l = 0; l < kPinCount; ++l)
        for (std::size_t j = 0; j < state.pin_points[k][l].size(); ++j)
          push(BlockKind::kBackprojPin, ik, l, static_cast<int>(j), state.pin_points[k][l][j],
               assoc.pin_closest[k][l][j], {SlotKind::kPinPoint, ik, l, static_cast<int>(j)});
    }
  }
  return out;
}

inline std::vector<ResidualBlock> residuals_backprojection(const RegistrationState& state,
                                                           const ProblemInputs& in,
                                                           const EnergyOptions& options,
                                                           bool with_jacobians = false) {
  if (in.tibia.empty() || in.pin.empty()) throw Error(ErrorCode::kEmptyMesh, "back-projection needs both meshes");
  EnergyOptions only = options;
  only.weights = {0.0, options.weights.backprojection > 0.0 ? options.weights.backprojection : 1.0, 0.0};
  auto blocks = residuals_backprojection(state, associate(state, in, only), in, options, with_jacobians);
  return blocks;
}

/// Model-projection blocks (scalar, px): distance from each silhouette sample of
/// the posed meshes to its nearest observed contour point.
inline std::vector<ResidualBlock> residuals_modelprojection(const RegistrationState& state,
                                                            const Associations& assoc,
                                                            const ProblemInputs& in,
                                                            const EnergyOptions& options,
                                                            bool with_jacobians = false,
                                                            std::vector<std::string>* warnings = nullptr) {
  if (!assoc.has_model) throw Error(ErrorCode::kInvalidInput, "associations lack silhouettes");
  std::vector<ResidualBlock> out;
  const auto& cam = in.camera;
  Eigen::MatrixXd W(1, 1);
  W(0, 0) = 1.0 / options.contour_sigma;
  auto push = [&](BlockKind kind, int k, int l, int m, const Vec3& y, const RigidPose& C,
                  const Vec2& c, const RigidPose* M, const Vec3& Q) {
    const Vec3 x = C.apply(y);
    if (!(x.z() > kMinDepth)) {
      if (options.strict_depth)
        throw Error(ErrorCode::kNonPositiveDepth, detail::where(k, l, m) + " silhouette sample behind camera");
      if (warnings) warnings->push_back("dropped model-projection block at " + detail::where(k, l, m));
      return;
    }
    const Vec2 e = cam.project_camera_frame(x) - c;
    const double d = e.norm();
    ResidualBlock b;
    b.kind = kind;
    b.image = k;
    b.pin = l;
    b.index = m;
    b.residual = Eigen::VectorXd::Constant(1, d);
    b.whitening = W;
    b.weight = options.weights.modelprojection;
    if (M) {
      b.slots = {{SlotKind::kCamera, k}, {SlotKind::kPin, -1, l}};
    } else {
      b.slots = {{SlotKind::kCamera, k}};
    }
    if (with_jacobians) {
      Eigen::RowVector3d dr_dx = Eigen::RowVector3d::Zero();
      if (d > 1e-12) dr_dx = (e / d).transpose() * cam.projection_jacobian(x);
      b.jacobians.push_back(dr_dx * detail::pose_point_jacobian(C, y));
      if (M) b.jacobians.push_back(dr_dx * C.rotation * detail::pose_point_jacobian(*M, Q));
    }
    out.push_back(std::move(b));
  };
  for (std::size_t k = 0; k < state.image_count(); ++k) {
    const int ik = static_cast<int>(k);
    const auto& im = in.contours.images[k];
    const RigidPose& C = state.cameras[k];
    if (options.include_tibia && k < assoc.tibia_model.size()) {
      const auto& corr = assoc.tibia_model[k];
      for (std::size_t m = 0; m < corr.size(); ++m)
        push(BlockKind::kModelprojTibia, ik, -1, static_cast<int>(m), corr[m].surface, C,
             im.tibia[corr[m].contour], nullptr, corr[m].surface);
    }
    if (options.include_pins && k < assoc.pin_model.size()) {
      for (int l = 0; l < kPinCount; ++l) {
        const auto& corr = assoc.pin_model[k][l];
        const RigidPose& M = state.pins[l];
        for (std::size_t m = 0; m < corr.size(); ++m)
          push(BlockKind::kModelprojPin, ik, l, static_cast<int>(m), M.apply(corr[m].surface), C,
               im.pins[l][corr[m].contour], &M, corr[m].surface);
      }
    }
  }
  return out;
}

inline std::vector<ResidualBlock> residuals_modelprojection(const RegistrationState& state,
                                                            const ProblemInputs& in,
                                                            const EnergyOptions& options,
                                                            bool with_jacobians = false,
                                                            std::vector<std::string>* warnings = nullptr) {
  state.check_matches(in.contours);
  EnergyOptions only = options;
  only.weights = {0.0, 0.0, options.weights.modelprojection > 0.0 ? options.weights.modelprojection : 1.0};
  const auto assoc = associate(state, in, only);
  if (warnings) warnings->insert(warnings->end(), assoc.warnings.begin(), assoc.warnings.end());
  return residuals_modelprojection(state, assoc, in, options, with_jacobians, warnings);
}

/// All blocks of the enabled (non-zero weight) terms under frozen associations.
inline std::vector<ResidualBlock> residual_blocks(const RegistrationState& state,
                                                  const Associations& assoc,
                                                  const ProblemInputs& in,
                                                  const EnergyOptions& options,
                                                  bool with_jacobians,
                                                  std::vector<std::string>* warnings = nullptr) {
  std::vector<ResidualBlock> out;
  auto append = [&](std::vector<ResidualBlock>&& v) {
    out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  };
  if (options.weights.reprojection > 0.0)
    append(residuals_reprojection(state, in, options, with_jacobians, warnings));
  if (options.weights.backprojection > 0.0)
    append(residuals_backprojection(state, assoc, in, options, with_jacobians));
  if (options.weights.modelprojection > 0.0)
    append(residuals_modelprojection(state, assoc, in, options, with_jacobians, warnings));
  return out;
}

inline EnergyBreakdown energy_of(const std::vector<ResidualBlock>& blocks, const EnergyWeights& w) {
  EnergyBreakdown e;
  for (const auto& b : blocks) {
    const double s = b.squared_norm();
    switch (b.kind) {
      case BlockKind::kReprojTibia:
      case BlockKind::kReprojPin: e.reprojection += s; break;
      case BlockKind::kBackprojTibia:
      case BlockKind::kBackprojPin: e.backprojection += s; break;
      case BlockKind::kModelprojTibia:
      case BlockKind::kModelprojPin: e.modelprojection += s; break;
    }
  }
  e.total = w.reprojection * e.reprojection + w.backprojection * e.backprojection +
            w.modelprojection * e.modelprojection;
  return e;
}

/// Weighted objective with correspondences re-associated at `state`.
inline EnergyBreakdown total_energy(const RegistrationState& state, const ProblemInputs& in,
                                    const EnergyOptions& options,
                                    std::vector<std::string>* warnings = nullptr) {
  options.weights.validate();
  state.check_matches(in.contours);
  const auto assoc = associate(state, in, options);
  if (warnings) warnings->insert(warnings->end(), assoc.warnings.begin(), assoc.warnings.end());
  return energy_of(residual_blocks(state, assoc, in, options, false, warnings), options.weights);
}

struct StackedSystem {
  Eigen::SparseMatrix<double> jacobian;  // rows: weighted whitened residuals
  Eigen::VectorXd residual;
};

inline std::size_t slot_column(const StateLayout& layout, const Slot& s) {
  switch (s.kind) {
    case SlotKind::kCamera: return layout.camera(s.image);
    case SlotKind::kPin: return layout.pin(s.pin);
    case SlotKind::kTibiaPoint: return layout.tibia_point(s.image, s.index);
    case SlotKind::kPinPoint: return layout.pin_point(s.image, s.pin, s.index);
  }
  return 0;
}

/// Stacked sqrt(w) W r and its frozen-correspondence Jacobian over the full
/// state layout (6N + 12 + 3 * points columns).
inline StackedSystem stack(const std::vector<ResidualBlock>& blocks, const StateLayout& layout) {
  std::size_t rows = 0;
  for (const auto& b : blocks) rows += b.residual.size();
  StackedSystem sys;
  sys.residual.resize(static_cast<Eigen::Index>(rows));
  std::vector<Eigen::Triplet<double>> triplets;
  std::size_t row = 0;
  for (const auto& b : blocks) {
    const double s = std::sqrt(b.weight);
    const Eigen::Index m = b.residual.size();
    sys.residual.segment(static_cast<Eigen::Index>(row), m) = s * b.whitened();
    for (std::size_t k = 0; k < b.slots.size() && k < b.jacobians.size(); ++k) {
      const Eigen::MatrixXd J = s * b.whitening * b.jacobians[k];
      const std::size_t col = slot_column(layout, b.slots[k]);
      for (Eigen::Index r = 0; r < J.rows(); ++r)
        for (Eigen::Index c = 0; c < J.cols(); ++c)
          if (J(r, c) != 0.0)
            triplets.emplace_back(static_cast<int>(row + r), static_cast<int>(col + c), J(r, c));
    }
    row += static_cast<std::size_t>(m);
  }
  sys.jacobian.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(layout.size()));
  sys.jacobian.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

inline StackedSystem jacobian(const RegistrationState& state, const ProblemInputs& in,
                              const EnergyOptions& options) {
  options.weights.validate();
  state.check_matches(in.contours);
  const auto assoc = associate(state, in, options);
  return stack(residual_blocks(state, assoc, in, options, true), StateLayout(state));
}

}  // namespace tka

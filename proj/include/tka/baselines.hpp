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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tka/energy/terms.hpp"
#include "tka/solver/registration.hpp"

namespace tka {

enum class Method { kProposed, kProjSplit, kProjJoint, kBackprojSplit, kBackprojJoint };

inline constexpr std::array<Method, 5> kAllMethods = {Method::kProposed, Method::kProjSplit, Method::kProjJoint,
                                                     Method::kBackprojSplit, Method::kBackprojJoint};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::kProposed: return "proposed";
    case Method::kProjSplit: return "proj-split";
    case Method::kProjJoint: return "proj-joint";
    case Method::kBackprojSplit: return "backproj-split";
    case Method::kBackprojJoint: return "backproj-joint";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (method_name(m) == s) return m;
  return std::nullopt;
}

/// Which energy terms a strategy keeps, and whether poses are estimated in
/// alternating camera / pin stages.
struct Strategy {
  EnergyWeights weights;
  bool split = false;
  int rounds = 2;
};

inline Strategy strategy_of(Method m, const EnergyWeights& proposed = {}) {
  switch (m) {
    case Method::kProposed: return {proposed, false};
    case Method::kProjSplit: return {{0.0, 0.0, 1.0}, true};
    case Method::kProjJoint: return {{0.0, 0.0, 1.0}, false};
    case Method::kBackprojSplit: return {{0.0, 1.0, 0.0}, true};
    case Method::kBackprojJoint: return {{0.0, 1.0, 0.0}, false};
  }
  return {};
}

/// Back-projection only: every contour point lives on its observed pixel ray
/// at a free depth, so reprojection holds by construction and only the
/// point-to-surface distance is minimized over poses and depths.
class RayDepthModel {
 public:
  RayDepthModel(const ProblemInputs& in, const EnergyOptions& options, FreePoses free = {})
      : in_(in), options_(options), free_(free) {
    options_.weights = {0.0, options.weights.backprojection, 0.0};
    options_.weights.validate();
  }

  /// Moves every point onto its ray, keeping its current camera depth (or the
  /// depth of the tibia origin when that is not in front of the camera).
  RegistrationState snap(const RegistrationState& s) const {
    RegistrationState out = s;
    for (std::size_t k = 0; k < s.image_count(); ++k) {
      const RigidPose& C = s.cameras[k];
      const double fallback = std::max(C.translation.z(), 10.0 * kMinDepth);
      auto depth = [&](double z) { return z > kMinDepth ? z : fallback; };
      const auto& im = in_.contours.images[k];
      for (std::size_t i = 0; i < out.tibia_points[k].size(); ++i)
        out.tibia_points[k][i] = on_ray(k, -1, im.tibia[i], depth(C.apply(s.tibia_points[k][i]).z()), out);
      for (int l = 0; l < kPinCount; ++l)
        for (std::size_t j = 0; j < out.pin_points[k][l].size(); ++j)
          out.pin_points[k][l][j] =
              on_ray(k, l, im.pins[l][j], depth(C.apply(s.pins[l].apply(s.pin_points[k][l][j])).z()), out);
    }
    return out;
  }

  std::vector<ParameterBlock> parameter_blocks(const RegistrationState& s) const {
    std::vector<ParameterBlock> out;
    if (free_.cameras) out.insert(out.end(), s.image_count(), {6, false});
    if (free_.pins) out.insert(out.end(), kPinCount, {6, false});
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.image_count(); ++k) {
      if (options_.include_tibia) n += s.tibia_points[k].size();
      if (options_.include_pins) n += s.pin_points[k][0].size() + s.pin_points[k][1].size();
    }
    out.insert(out.end(), n, {1, true});
    return out;
  }

  Linearization linearize(const RegistrationState& s, std::vector<std::string>* warnings) const {
    const auto assoc = associate(s, in_, options_);
    if (warnings) warnings->insert(warnings->end(), assoc.warnings.begin(), assoc.warnings.end());
    const double w = std::sqrt(options_.weights.backprojection) / options_.point_sigma;
    Linearization lin;
    const int nk = static_cast<int>(s.image_count());
    int next = (free_.cameras ? nk : 0) + (free_.pins ? kPinCount : 0);
    auto rot_trans = [](const Vec3& p) {
      Eigen::Matrix<double, 3, 6> J;
      J.leftCols<3>() = skew(p);
      J.rightCols<3>() = -Mat3::Identity();
      return J;
    };
    for (int k = 0; k < nk; ++k) {
      const RigidPose& C = s.cameras[k];
      const auto& im = in_.contours.images[k];
      if (options_.include_tibia)
        for (std::size_t i = 0; i < s.tibia_points[k].size(); ++i) {
          const Vec3& P = s.tibia_points[k][i];
          LinearTerm t;
          t.residual = w * (P - assoc.tibia_closest[k][i]);
          if (free_.cameras) t.jacobians.emplace_back(k, w * rot_trans(P));
          t.jacobians.emplace_back(next++, w * C.rotation.transpose() * in_.camera.ray(im.tibia[i]));
          lin.energy += t.residual.squaredNorm();
          lin.terms.push_back(std::move(t));
        }
      if (options_.include_pins)
        for (int l = 0; l < kPinCount; ++l) {
          const RigidPose& M = s.pins[l];
          for (std::size_t j = 0; j < s.pin_points[k][l].size(); ++j) {
            const Vec3& P = s.pin_points[k][l][j];
            const Vec3 y = M.apply(P);
            LinearTerm t;
            t.residual = w * (P - assoc.pin_closest[k][l][j]);
            if (free_.cameras) t.jacobians.emplace_back(k, w * M.rotation.transpose() * rot_trans(y));
            if (free_.pins) t.jacobians.emplace_back((free_.cameras ? nk : 0) + l, w * rot_trans(P));
            t.jacobians.emplace_back(
                next++, w * M.rotation.transpose() * C.rotation.transpose() * in_.camera.ray(im.pins[l][j]));
            lin.energy += t.residual.squaredNorm();
            lin.terms.push_back(std::move(t));
          }
        }
    }
    return lin;
  }

  double energy(const RegistrationState& s, std::vector<std::string>* warnings) const {
    return total_energy(s, in_, options_, warnings).total;
  }

  RegistrationState retract(const RegistrationState& s, const Eigen::VectorXd& delta) const {
    const std::size_t nk = s.image_count();
    // Depths are read off the current state before the poses move.
    std::vector<std::vector<double>> dt(nk);
    std::vector<std::array<std::vector<double>, kPinCount>> dp(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      for (const auto& P : s.tibia_points[k]) dt[k].push_back(s.cameras[k].apply(P).z());
      for (int l = 0; l < kPinCount; ++l)
        for (const auto& P : s.pin_points[k][l]) dp[k][l].push_back(s.cameras[k].apply(s.pins[l].apply(P)).z());
    }
    RegistrationState out = s;
    int off = 0;
    if (free_.cameras)
      for (auto& c : out.cameras) {
        c = tka::retract(c, delta.segment<6>(off));
        off += 6;
      }
    if (free_.pins)
      for (auto& m : out.pins) {
        m = tka::retract(m, delta.segment<6>(off));
        off += 6;
      }
    for (std::size_t k = 0; k < nk; ++k) {
      const auto& im = in_.contours.images[k];
      for (std::size_t i = 0; i < dt[k].size(); ++i) {
        if (options_.include_tibia) dt[k][i] += delta[off++];
        out.tibia_points[k][i] = on_ray(k, -1, im.tibia[i], dt[k][i], out);
      }
      for (int l = 0; l < kPinCount; ++l)
        for (std::size_t j = 0; j < dp[k][l].size(); ++j) {
          if (options_.include_pins) dp[k][l][j] += delta[off++];
          out.pin_points[k][l][j] = on_ray(k, l, im.pins[l][j], dp[k][l][j], out);
        }
    }
    return out;
  }

 private:
  // Point of pixel `px` at camera depth `d`, in the tibia frame (pin < 0) or
  // the frame of pin `pin`, under the poses of `s`.
  Vec3 on_ray(std::size_t k, int pin, const Vec2& px, double d, const RegistrationState& s) const {
    const Vec3 y = s.cameras[k].apply_inverse(d * in_.camera.ray(px));
    return pin < 0 ? y : s.pins[pin].apply_inverse(y);
  }

  ProblemInputs in_;
  EnergyOptions options_;
  FreePoses free_;
};

/// One stage of a split run.
struct StageRecord {
  int round = 0;
  std::string stage;  // "cameras" or "pins"
  std::vector<double> energies;
  int iterations = 0;
  std::string termination;
};

struct MethodOutcome {
  SolveOutcome outcome;
  std::vector<StageRecord> stages;
};

namespace detail {

inline SolveOutcome run_stage(const Strategy& st, const RegistrationState& initial, const ProblemInputs& in,
                              const SolverConfig& cfg, const EnergyOptions& options, FreePoses free) {
  EnergyOptions o = options;
  o.weights = st.weights;
  const bool rays = st.weights.reprojection == 0.0 && st.weights.modelprojection == 0.0;
  if (!rays) return solve(initial, in, cfg, o, free);
  const RayDepthModel model(in, o, free);
  return minimize(model, model.snap(initial), cfg);
}

}  // namespace detail

/// Runs one registration strategy with the shared damped Gauss-Newton engine.
/// The reported energies are the full-problem energy restricted to the
/// strategy's terms.
inline MethodOutcome run_strategy(const Strategy& st, const RegistrationState& initial, const ProblemInputs& in,
                                  const SolverConfig& cfg, const EnergyOptions& options = {}) {
  cfg.validate();
  EnergyOptions full = options;
  full.weights = st.weights;
  validate_problem(initial, in, full);
  MethodOutcome r;
  if (initial.image_count() < 2) {
    r.outcome.state = initial;
    r.outcome.energies.push_back(total_energy(initial, in, full, &r.outcome.warnings).total);
    r.outcome.termination = "underconstrained";
    return r;
  }
  if (!st.split) {
    r.outcome = detail::run_stage(st, initial, in, cfg, options, {});
    return r;
  }
  if (st.rounds < 1) throw Error(ErrorCode::kInvalidInput, "split strategy needs at least one round");
  SolveOutcome& out = r.outcome;
  out.state = initial;
  out.energies.push_back(total_energy(initial, in, full, &out.warnings).total);
  out.converged = true;
  for (int round = 1; round <= st.rounds; ++round) {
    for (const bool cameras : {true, false}) {
      EnergyOptions o = options;
      o.include_tibia = cameras;
      o.include_pins = !cameras;
      const auto s = detail::run_stage(st, out.state, in, cfg, o, {cameras, !cameras});
      r.stages.push_back({round, cameras ? "cameras" : "pins", s.energies, s.iterations, s.termination});
      out.state = s.state;
      out.iterations += s.iterations;
      out.log.insert(out.log.end(), s.log.begin(), s.log.end());
      detail::add_unique(out.warnings, s.warnings);
      if (round == st.rounds) out.converged = out.converged && s.converged;
      out.termination = s.termination;
    }
    out.energies.push_back(total_energy(out.state, in, full, &out.warnings).total);
  }
  return r;
}

inline MethodOutcome run_method(Method m, const RegistrationState& initial, const ProblemInputs& in,
                                const SolverConfig& cfg, const EnergyOptions& options = {}) {
  return run_strategy(strategy_of(m, options.weights), initial, in, cfg, options);
}

}  // namespace tka

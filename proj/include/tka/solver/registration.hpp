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

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tka/energy/state.hpp"
#include "tka/energy/terms.hpp"
#include "tka/solver/least_squares.hpp"

namespace tka {

using SolveOutcome = MinimizeResult<RegistrationState>;

/// Which pose groups move. Points move whenever a term that involves them is on.
struct FreePoses {
  bool cameras = true;
  bool pins = true;
};

/// The registration objective as a least-squares model: pose blocks are
/// updated on the manifold, 3D contour points additively and eliminated.
class RegistrationModel {
 public:
  RegistrationModel(const ProblemInputs& in, const EnergyOptions& options, FreePoses free = {})
      : in_(in), options_(options), free_(free) {
    options_.weights.validate();
  }

  const EnergyOptions& options() const { return options_; }

  std::vector<ParameterBlock> parameter_blocks(const RegistrationState& s) const {
    std::vector<ParameterBlock> out;
    const Map map(s, *this);
    out.resize(map.count);
    for (auto& b : out) b = {6, false};
    for (const auto& v : map.tibia)
      for (int b : v)
        if (b >= 0) out[b] = {3, true};
    for (const auto& a : map.pin)
      for (const auto& v : a)
        for (int b : v)
          if (b >= 0) out[b] = {3, true};
    return out;
  }

  Linearization linearize(const RegistrationState& s, std::vector<std::string>* warnings) const {
    const auto assoc = associate(s, in_, options_);
    if (warnings) warnings->insert(warnings->end(), assoc.warnings.begin(), assoc.warnings.end());
    const auto blocks = residual_blocks(s, assoc, in_, options_, true, warnings);
    const Map map(s, *this);
    Linearization lin;
    lin.energy = energy_of(blocks, options_.weights).total;
    lin.terms.reserve(blocks.size());
    for (const auto& b : blocks) {
      const double sw = std::sqrt(b.weight);
      LinearTerm t;
      for (std::size_t k = 0; k < b.slots.size(); ++k) {
        const int idx = map.of(b.slots[k]);
        if (idx >= 0) t.jacobians.emplace_back(idx, sw * b.whitening * b.jacobians[k]);
      }
      if (t.jacobians.empty()) continue;
      t.residual = sw * b.whitened();
      lin.terms.push_back(std::move(t));
    }
    return lin;
  }

  double energy(const RegistrationState& s, std::vector<std::string>* warnings) const {
    return total_energy(s, in_, options_, warnings).total;
  }

  RegistrationState retract(const RegistrationState& s, const Eigen::VectorXd& delta) const {
    RegistrationState out = s;
    const Map map(s, *this);
    int off = 0;
    // Blocks are numbered in the order they are laid out, so walking the
    // state in that same order consumes delta sequentially.
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
    if (map.tibia_free)
      for (auto& v : out.tibia_points)
        for (auto& p : v) {
          p += delta.segment<3>(off);
          off += 3;
        }
    if (map.pin_free)
      for (auto& a : out.pin_points)
        for (auto& v : a)
          for (auto& p : v) {
            p += delta.segment<3>(off);
            off += 3;
          }
    return out;
  }

 private:
  struct Map {
    std::vector<int> cameras;
    std::array<int, kPinCount> pins{-1, -1};
    std::vector<std::vector<int>> tibia;
    std::vector<std::array<std::vector<int>, kPinCount>> pin;
    bool tibia_free = false;
    bool pin_free = false;
    int count = 0;

    Map(const RegistrationState& s, const RegistrationModel& m) {
      const auto& w = m.options_.weights;
      const bool points = w.reprojection > 0.0 || w.backprojection > 0.0;
      tibia_free = points && m.options_.include_tibia;
      pin_free = points && m.options_.include_pins;
      cameras.assign(s.image_count(), -1);
      if (m.free_.cameras)
        for (auto& c : cameras) c = count++;
      if (m.free_.pins)
        for (auto& p : pins) p = count++;
      tibia.resize(s.image_count());
      pin.resize(s.image_count());
      for (std::size_t k = 0; k < s.image_count(); ++k)
        tibia[k].assign(s.tibia_points[k].size(), -1);
      for (std::size_t k = 0; k < s.image_count(); ++k)
        for (int l = 0; l < kPinCount; ++l) pin[k][l].assign(s.pin_points[k][l].size(), -1);
      if (tibia_free)
        for (auto& v : tibia)
          for (auto& b : v) b = count++;
      if (pin_free)
        for (auto& a : pin)
          for (auto& v : a)
            for (auto& b : v) b = count++;
    }

    int of(const Slot& s) const {
      switch (s.kind) {
        case SlotKind::kCamera: return cameras[s.image];
        case SlotKind::kPin: return pins[s.pin];
        case SlotKind::kTibiaPoint: return tibia[s.image][s.index];
        case SlotKind::kPinPoint: return pin[s.image][s.pin][s.index];
      }
      return -1;
    }
  };

  ProblemInputs in_;
  EnergyOptions options_;
  FreePoses free_;
};

/// Flat vector in layout order: absolute se(3) coordinates of every camera and
/// pin pose, then tibia points by (k, i), then pin points by (k, l, j).
inline Eigen::VectorXd pack(const RegistrationState& s) {
  const StateLayout L(s);
  Eigen::VectorXd x(static_cast<Eigen::Index>(L.size()));
  for (std::size_t k = 0; k < s.image_count(); ++k) x.segment<6>(L.camera(k)) = se3_log(s.cameras[k]).vector();
  for (int l = 0; l < kPinCount; ++l) x.segment<6>(L.pin(l)) = se3_log(s.pins[l]).vector();
  for (std::size_t k = 0; k < s.image_count(); ++k) {
    for (std::size_t i = 0; i < s.tibia_points[k].size(); ++i) x.segment<3>(L.tibia_point(k, i)) = s.tibia_points[k][i];
    for (int l = 0; l < kPinCount; ++l)
      for (std::size_t j = 0; j < s.pin_points[k][l].size(); ++j)
        x.segment<3>(L.pin_point(k, l, j)) = s.pin_points[k][l][j];
  }
  return x;
}

inline RegistrationState unpack(const Eigen::VectorXd& x, const RegistrationState& layout_template) {
  const StateLayout L(layout_template);
  if (static_cast<std::size_t>(x.size()) != L.size())
    throw Error(ErrorCode::kLengthMismatch, "parameter vector has " + std::to_string(x.size()) +
                                                " entries, layout needs " + std::to_string(L.size()));
  RegistrationState s = layout_template;
  for (std::size_t k = 0; k < s.image_count(); ++k)
    s.cameras[k] = se3_exp(PoseTangent::from_vector(x.segment<6>(L.camera(k))));
  for (int l = 0; l < kPinCount; ++l) s.pins[l] = se3_exp(PoseTangent::from_vector(x.segment<6>(L.pin(l))));
  for (std::size_t k = 0; k < s.image_count(); ++k) {
    for (std::size_t i = 0; i < s.tibia_points[k].size(); ++i) s.tibia_points[k][i] = x.segment<3>(L.tibia_point(k, i));
    for (int l = 0; l < kPinCount; ++l)
      for (std::size_t j = 0; j < s.pin_points[k][l].size(); ++j)
        s.pin_points[k][l][j] = x.segment<3>(L.pin_point(k, l, j));
  }
  return s;
}

struct GnStep {
  RegistrationState candidate;
  Eigen::VectorXd delta;
  double predicted_reduction = 0.0;
};

/// One damped Gauss-Newton step from `state` with correspondences associated at `state`.
inline GnStep gn_step(const RegistrationState& state, const ProblemInputs& in, const EnergyOptions& options,
                      double lambda, LinearSolver method = LinearSolver::kSchur) {
  state.check_matches(in.contours);
  const RegistrationModel model(in, options);
  const auto lin = model.linearize(state, nullptr);
  auto step = solve_normal_equations(model.parameter_blocks(state), lin, lambda, method);
  return {model.retract(state, step.delta), std::move(step.delta), step.predicted_reduction};
}

inline void validate_problem(const RegistrationState& initial, const ProblemInputs& in,
                             const EnergyOptions& options) {
  options.weights.validate();
  if (!(options.point_sigma > 0) || !(options.contour_sigma > 0))
    throw Error(ErrorCode::kInvalidInput, "sigmas must be positive");
  in.camera.validate();
  in.contours.validate(in.camera);
  initial.check_matches(in.contours);
  if (in.tibia.empty() || in.pin.empty()) throw Error(ErrorCode::kEmptyMesh, "tibia and pin meshes are required");
}

/// Joint registration of all poses and contour points.
inline SolveOutcome solve(const RegistrationState& initial, const ProblemInputs& in,
                          const SolverConfig& cfg, const EnergyOptions& options = {},
                          FreePoses free = {}) {
  cfg.validate();
  validate_problem(initial, in, options);
  const RegistrationModel model(in, options, free);
  if (initial.image_count() < 2) {
    SolveOutcome out;
    out.state = initial;
    out.energies.push_back(model.energy(initial, &out.warnings));
    out.converged = false;
    out.termination = "underconstrained";
    return out;
  }
  // A mesh off-screen at the start leaves the model-projection term undefined.
  // The other terms are defined everywhere, so they alone move the state
  // until every silhouette exists; those iterations count against the budget.
  auto off_screen = [&](const RegistrationState& s) -> std::optional<Error> {
    try {
      model.energy(s, nullptr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kOffScreen) throw;
      return e;
    }
    return std::nullopt;
  };
  RegistrationState start = initial;
  SolveOutcome warm;
  if (auto err = off_screen(start)) {
    const auto& w = options.weights;
    if (w.modelprojection == 0.0 || (w.reprojection == 0.0 && w.backprojection == 0.0)) throw *err;
    EnergyOptions pre = options;
    pre.weights.modelprojection = 0.0;
    const RegistrationModel pre_model(in, pre, free);
    SolverConfig one = cfg;
    one.max_iterations = 1;
    while (err) {
      if (warm.iterations >= cfg.max_iterations) throw *err;
      const auto r = minimize(pre_model, start, one);
      if (r.energies.size() < 2) throw *err;
      warm.iterations += r.iterations;
      warm.log.insert(warm.log.end(), r.log.begin(), r.log.end());
      detail::add_unique(warm.warnings, r.warnings);
      start = r.state;
      err = off_screen(start);
    }
    warm.warnings.push_back("initial state projects a mesh off-screen; " + std::to_string(warm.iterations) +
                            " iteration(s) without model projection");
  }
  if (warm.iterations == 0) return minimize(model, start, cfg);
  SolveOutcome out;
  if (warm.iterations < cfg.max_iterations) {
    SolverConfig rest = cfg;
    rest.max_iterations = cfg.max_iterations - warm.iterations;
    out = minimize(model, start, rest);
  } else {
    out.state = start;
    out.energies.push_back(model.energy(start, &out.warnings));
    out.termination = "max-iterations";
  }
  out.iterations += warm.iterations;
  out.log.insert(out.log.begin(), warm.log.begin(), warm.log.end());
  std::vector<std::string> warnings = warm.warnings;
  detail::add_unique(warnings, out.warnings);
  out.warnings = std::move(warnings);
  return out;
}

}  // namespace tka

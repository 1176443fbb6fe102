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
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tka/error.hpp"

namespace tka {

enum class LinearSolver { kSchur, kDense };

struct SolverConfig {
  int max_iterations = 30;
  /// Relative energy decrease below which an accepted step ends the solve.
  double energy_tolerance = 1e-6;
  /// Infinity norm of the step below which the solve ends.
  double step_tolerance = 1e-8;
  double initial_damping = 1e-4;
  double damping_scale = 10.0;
  /// Lower clamp for the damping after accepted steps; keeps near-null
  /// directions (a pin rolling about its own axis) factorizable.
  double min_damping = 1e-6;
  double max_damping = 1e12;
  LinearSolver linear_solver = LinearSolver::kSchur;
  bool verbose = false;

  void validate() const {
    if (max_iterations < 1 || !(energy_tolerance > 0) || !(step_tolerance > 0) ||
        !(initial_damping > 0) || !(damping_scale > 1) || !(min_damping > 0) ||
        !(max_damping > initial_damping))
      throw Error(ErrorCode::kInvalidInput, "invalid solver configuration");
  }
};

/// A group of unknowns. Eliminable blocks (3-D points, depths) may each be
/// touched by terms that touch no other eliminable block.
struct ParameterBlock {
  int size = 0;
  bool eliminable = false;
};

/// One already whitened and weighted residual with its Jacobian per block.
struct LinearTerm {
  Eigen::VectorXd residual;
  std::vector<std::pair<int, Eigen::MatrixXd>> jacobians;
};

struct Linearization {
  std::vector<LinearTerm> terms;
  double energy = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  double energy = 0.0;  // candidate energy
  double damping = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

template <class State>
struct MinimizeResult {
  State state;
  std::vector<double> energies;  // initial, then one per accepted step
  std::vector<IterationRecord> log;
  int iterations = 0;
  bool converged = false;
  std::string termination;
  std::vector<std::string> warnings;

  double final_energy() const { return energies.back(); }
};

struct NormalStep {
  Eigen::VectorXd delta;
  double predicted_reduction = 0.0;
};

namespace detail {

inline void check_factor(const Eigen::LDLT<Eigen::MatrixXd>& f) {
  if (f.info() != Eigen::Success)
    throw Error(ErrorCode::kSingularNormalEquations, "factorization failed");
  const Eigen::VectorXd d = f.vectorD().cwiseAbs();
  if (d.size() == 0) return;
  const double top = d.maxCoeff();
  if (!(top > 0.0) || !std::isfinite(top) || d.minCoeff() <= 1e-14 * top)
    throw Error(ErrorCode::kSingularNormalEquations,
                "damped normal equations are numerically singular (pivot ratio " +
                    std::to_string(d.minCoeff() / std::max(top, 1e-300)) + ")");
}

inline double damped(double h, double lambda) { return h + lambda * std::max(h, 1e-6); }

inline void add_unique(std::vector<std::string>& to, const std::vector<std::string>& from) {
  for (const auto& w : from)
    if (std::find(to.begin(), to.end(), w) == to.end()) to.push_back(w);
}

}  // namespace detail

/// Solves (H + lambda D) delta = -g for the stacked terms, D = max(diag H, 1e-6).
/// The Schur path eliminates the eliminable blocks first; both paths give the
/// same step up to round-off.
inline NormalStep solve_normal_equations(const std::vector<ParameterBlock>& blocks,
                                         const Linearization& lin, double lambda,
                                         LinearSolver method = LinearSolver::kSchur) {
  const int nb = static_cast<int>(blocks.size());
  std::vector<int> offset(nb + 1, 0);
  for (int b = 0; b < nb; ++b) offset[b + 1] = offset[b] + blocks[b].size;
  const int n = offset[nb];
  NormalStep out;
  out.delta = Eigen::VectorXd::Zero(n);
  if (n == 0) return out;

  if (method == LinearSolver::kDense) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (const auto& t : lin.terms) {
      for (const auto& [bi, Ji] : t.jacobians) {
        g.segment(offset[bi], blocks[bi].size) += Ji.transpose() * t.residual;
        for (const auto& [bj, Jj] : t.jacobians)
          H.block(offset[bi], offset[bj], blocks[bi].size, blocks[bj].size) += Ji.transpose() * Jj;
      }
    }
    for (int i = 0; i < n; ++i) H(i, i) = detail::damped(H(i, i), lambda);
    const Eigen::LDLT<Eigen::MatrixXd> f(H);
    detail::check_factor(f);
    out.delta = f.solve(-g);
  } else {
    // Reduced (non-eliminable) unknowns first.
    std::vector<int> reduced_offset(nb, -1);
    int m = 0;
    for (int b = 0; b < nb; ++b)
      if (!blocks[b].eliminable) {
        reduced_offset[b] = m;
        m += blocks[b].size;
      }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(m);
    struct Eliminated {
      Eigen::MatrixXd Hqq;
      Eigen::VectorXd gq;
      Eigen::MatrixXd Hqp;  // size_q x m
      bool used = false;
    };
    std::vector<Eliminated> elim(nb);
    for (const auto& t : lin.terms) {
      int q = -1;
      for (const auto& [b, J] : t.jacobians) {
        if (!blocks[b].eliminable) continue;
        if (q >= 0 && q != b)
          throw Error(ErrorCode::kInvalidInput, "term couples two eliminable blocks");
        q = b;
      }
      for (const auto& [bi, Ji] : t.jacobians) {
        if (blocks[bi].eliminable) continue;
        gs.segment(reduced_offset[bi], blocks[bi].size) += Ji.transpose() * t.residual;
        for (const auto& [bj, Jj] : t.jacobians)
          if (!blocks[bj].eliminable)
            S.block(reduced_offset[bi], reduced_offset[bj], blocks[bi].size, blocks[bj].size) +=
                Ji.transpose() * Jj;
      }
      if (q < 0) continue;
      auto& e = elim[q];
      const int sq = blocks[q].size;
      if (!e.used) {
        e.Hqq = Eigen::MatrixXd::Zero(sq, sq);
        e.gq = Eigen::VectorXd::Zero(sq);
        e.Hqp = Eigen::MatrixXd::Zero(sq, m);
        e.used = true;
      }
      const Eigen::MatrixXd* Jq = nullptr;
      for (const auto& [b, J] : t.jacobians)
        if (b == q) Jq = &J;
      e.Hqq += Jq->transpose() * *Jq;
      e.gq += Jq->transpose() * t.residual;
      for (const auto& [b, J] : t.jacobians)
        if (!blocks[b].eliminable) e.Hqp.middleCols(reduced_offset[b], blocks[b].size) += Jq->transpose() * J;
    }
    for (int i = 0; i < m; ++i) S(i, i) = detail::damped(S(i, i), lambda);
    std::vector<Eigen::MatrixXd> inv(nb);
    for (int q = 0; q < nb; ++q) {
      if (!blocks[q].eliminable || !elim[q].used) continue;
      auto& e = elim[q];
      for (int i = 0; i < blocks[q].size; ++i) e.Hqq(i, i) = detail::damped(e.Hqq(i, i), lambda);
      const Eigen::LDLT<Eigen::MatrixXd> f(e.Hqq);
      detail::check_factor(f);
      inv[q] = f.solve(Eigen::MatrixXd::Identity(blocks[q].size, blocks[q].size));
      const Eigen::MatrixXd W = e.Hqp.transpose() * inv[q];
      S.noalias() -= W * e.Hqp;
      gs.noalias() -= W * e.gq;
    }
    Eigen::VectorXd dp = Eigen::VectorXd::Zero(m);
    if (m > 0) {
      S = 0.5 * (S + S.transpose()).eval();
      const Eigen::LDLT<Eigen::MatrixXd> f(S);
      detail::check_factor(f);
      dp = f.solve(-gs);
    }
    for (int b = 0; b < nb; ++b) {
      if (!blocks[b].eliminable) {
        out.delta.segment(offset[b], blocks[b].size) = dp.segment(reduced_offset[b], blocks[b].size);
      } else if (elim[b].used) {
        out.delta.segment(offset[b], blocks[b].size) = inv[b] * (-elim[b].gq - elim[b].Hqp * dp);
      }
    }
  }
  if (!out.delta.allFinite())
    throw Error(ErrorCode::kSingularNormalEquations, "non-finite step");

  // Model reduction sum(|r|^2 - |r + J delta|^2).
  for (const auto& t : lin.terms) {
    Eigen::VectorXd lin_r = t.residual;
    for (const auto& [b, J] : t.jacobians) lin_r += J * out.delta.segment(offset[b], blocks[b].size);
    out.predicted_reduction += t.residual.squaredNorm() - lin_r.squaredNorm();
  }
  return out;
}

/// Levenberg-damped Gauss-Newton with accept/reject. `Model` provides
///   std::vector<ParameterBlock> parameter_blocks(const State&) const;
///   Linearization linearize(const State&, std::vector<std::string>* warnings) const;
///   double energy(const State&, std::vector<std::string>* warnings) const;
///   State retract(const State&, const Eigen::VectorXd& delta) const;
/// Every energy is evaluated with freshly associated correspondences; the
/// linearization (and its associations) is recomputed once per accepted step.
template <class Model, class State>
MinimizeResult<State> minimize(const Model& model, State initial, const SolverConfig& cfg) {
  cfg.validate();
  MinimizeResult<State> res;
  res.state = std::move(initial);
  std::vector<std::string> init_warnings;
  double energy = model.energy(res.state, &init_warnings);
  detail::add_unique(res.warnings, init_warnings);
  res.energies.push_back(energy);
  if (!std::isfinite(energy)) throw Error(ErrorCode::kInvalidInput, "initial energy is not finite");
  if (energy == 0.0) {
    res.converged = true;
    res.termination = "zero-energy";
    return res;
  }
  const auto blocks = model.parameter_blocks(res.state);
  double lambda = cfg.initial_damping;
  const double floor = std::min(cfg.min_damping, cfg.initial_damping);
  while (true) {
    if (res.iterations >= cfg.max_iterations) {
      res.termination = "max-iterations";
      return res;
    }
    ++res.iterations;
    std::vector<std::string> lin_warnings;
    const Linearization lin = model.linearize(res.state, &lin_warnings);
    detail::add_unique(res.warnings, lin_warnings);
    bool accepted = false;
    while (!accepted) {
      if (lambda > cfg.max_damping)
        throw Error(ErrorCode::kDivergenceDetected,
                    "damping exceeded " + std::to_string(cfg.max_damping) + " at iteration " +
                        std::to_string(res.iterations));
      NormalStep step;
      try {
        step = solve_normal_equations(blocks, lin, lambda, cfg.linear_solver);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kSingularNormalEquations) throw;
        // More damping regularizes the system; give up only past the cap.
        lambda *= cfg.damping_scale;
        if (lambda > cfg.max_damping) throw;
        continue;
      }
      const double step_norm = step.delta.size() ? step.delta.cwiseAbs().maxCoeff() : 0.0;
      if (step_norm < cfg.step_tolerance) {
        res.log.push_back({res.iterations, energy, lambda, step_norm, false});
        res.converged = true;
        res.termination = "step-tolerance";
        return res;
      }
      State candidate = model.retract(res.state, step.delta);
      double e_new = std::numeric_limits<double>::infinity();
      std::vector<std::string> cand_warnings;
      try {
        e_new = model.energy(candidate, &cand_warnings);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kInvalidInput) throw;
      }
      accepted = std::isfinite(e_new) && e_new < energy;
      res.log.push_back({res.iterations, e_new, lambda, step_norm, accepted});
      if (cfg.verbose)
        std::fprintf(stderr, "iter %2d  E=%.9g  lambda=%.3g  |d|=%.3g  %s\n", res.iterations, e_new,
                     lambda, step_norm, accepted ? "accepted" : "rejected");
      if (!accepted) {
        lambda *= cfg.damping_scale;
        continue;
      }
      const double rel = (energy - e_new) / energy;
      res.state = std::move(candidate);
      detail::add_unique(res.warnings, cand_warnings);
      energy = e_new;
      res.energies.push_back(energy);
      lambda = std::max(lambda / cfg.damping_scale, floor);
      if (rel < cfg.energy_tolerance || energy == 0.0) {
        res.converged = true;
        res.termination = "energy-tolerance";
        return res;
      }
    }
  }
}

}  // namespace tka

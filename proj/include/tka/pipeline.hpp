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

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "tka/baselines.hpp"
#include "tka/geom/mesh_io.hpp"
#include "tka/io/formats.hpp"
#include "tka/resection.hpp"
#include "tka/synth/sweep.hpp"

// File-level workflows behind the command-line tool: write a synthetic case to
// disk, load and validate a run, estimate, and write the artifacts.
namespace tka {

struct SimulatedCase {
  int level = 0;
  NoiseSpec noise;
  Scenario scene;
  Observations observations;
  /// Perturbed ground truth, as in the sweep.
  RegistrationState initial;
};

/// Same draws as run 0 of a sweep with this base seed.
inline SimulatedCase simulate_case(std::uint64_t seed, int level, const ContourBudget& budget = {},
                                   const SceneOptions& scene = {}) {
  SimulatedCase c;
  c.level = level;
  c.noise = NoiseSpec::level(level);
  const RunSeeds s = run_seeds(seed, level, 0);
  c.scene = generate_scene(s.scene, scene);
  c.observations = render_observations(c.scene, c.noise.observation_sd, s.observations, budget);
  c.initial = perturb_initialization(c.observations.truth, c.noise, s.initialization);
  return c;
}

/// Writes meshes, contours, intrinsics, anatomy, poses, initial state, ground
/// truth and a run.json that `load_run` accepts unchanged. The run starts from
/// the perturbed state; drop "initial_state" from run.json to start from the
/// pose file and the planned pins instead.
inline void write_case(const SimulatedCase& c, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  const Scenario& sc = c.scene;
  io::save_ply(sc.tibia, dir / "tibia.ply");
  io::save_ply(sc.pin, dir / "pin.ply");
  io::write_json(dir / "contours.json", io::to_json(c.observations.contours));
  io::write_json(dir / "intrinsics.json", io::to_json(sc.camera));
  io::write_json(dir / "anatomy.json", io::to_json(io::Anatomy{sc.frame, sc.ideal_pins}));
  io::InitialPoses poses;
  poses.cameras = c.initial.cameras;
  poses.depth = SceneOptions{}.camera_distance;
  io::write_json(dir / "poses.json", io::to_json(poses));
  io::write_json(dir / "initial_state.json", io::to_json(c.initial));
  io::write_json(dir / "ground_truth.json", io::to_json(c.observations.truth));

  io::RunConfig cfg;
  cfg.tibia_mesh = dir / "tibia.ply";
  cfg.pin_mesh = dir / "pin.ply";
  cfg.contours = dir / "contours.json";
  cfg.intrinsics = dir / "intrinsics.json";
  cfg.anatomy = dir / "anatomy.json";
  cfg.poses = dir / "poses.json";
  cfg.initial_state = dir / "initial_state.json";
  cfg.ground_truth = dir / "ground_truth.json";
  cfg.output = "out";
  io::write_json(dir / "run.json", io::to_json(cfg, dir));
}

/// Everything a run needs, parsed and cross-checked.
struct LoadedRun {
  io::RunConfig config;
  TriangleMesh tibia;
  TriangleMesh pin;
  PinholeCamera camera;
  ContourSet contours;
  io::Anatomy anatomy;
  RegistrationState initial;
  std::optional<RegistrationState> truth;

  ProblemInputs inputs() const { return {tibia, pin, camera, contours}; }
};

inline LoadedRun load_run(const std::filesystem::path& config_path) {
  LoadedRun r;
  const auto base = config_path.parent_path();
  const io::Json cj = io::read_json(config_path);
  r.config = io::run_config_from(io::Node(cj, config_path.string()), base);
  const auto& c = r.config;
  auto node_of = [](const std::filesystem::path& p, auto&& fn) {
    const io::Json j = io::read_json(p);
    return fn(io::Node(j, p.string()));
  };
  r.camera = node_of(c.intrinsics, io::intrinsics_from);
  r.contours = node_of(c.contours, io::contours_from);
  if (r.contours.image_count() < 2) throw Error(ErrorCode::kInvalidInput, "at least 2 images required");
  apply_budget(r.contours, c.budget);
  r.anatomy = node_of(c.anatomy, io::anatomy_from);
  r.tibia = io::load_mesh(c.tibia_mesh);
  r.pin = io::load_mesh(c.pin_mesh);
  const io::InitialPoses poses = node_of(c.poses, io::poses_from);
  r.initial = c.initial_state ? node_of(*c.initial_state, io::state_from)
                              : io::initial_state(poses, r.anatomy, r.contours, r.camera);
  if (c.ground_truth) r.truth = node_of(*c.ground_truth, io::state_from);
  validate_problem(r.initial, r.inputs(), c.energy);
  if (r.truth && r.truth->image_count() != r.initial.image_count())
    throw Error(ErrorCode::kLengthMismatch, "ground truth and contours disagree on the number of images");
  return r;
}

struct EstimateResult {
  MethodOutcome method;
  ResectionReport report;
  std::optional<io::Evaluation> evaluation;
};

inline EstimateResult estimate(const LoadedRun& run) {
  EstimateResult e;
  EnergyOptions opt = run.config.energy;
  opt.weights.validate();
  e.method = run_method(run.config.method, run.initial, run.inputs(), run.config.solver, opt);
  const auto& state = e.method.outcome.state;
  e.report = make_report(run.pin, state.pins, run.anatomy.frame);
  if (run.truth) {
    const ResectionReport ref = make_report(run.pin, run.truth->pins, run.anatomy.frame);
    e.evaluation = io::evaluate(state, *run.truth, e.report, ref);
  }
  return e;
}

/// report.json, iterations.log and state.json in `dir`.
inline void write_estimate(const EstimateResult& e, Method method, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  io::write_json(dir / "report.json", io::report_json(e.report, method, e.method.outcome, e.evaluation));
  io::write_json(dir / "state.json", io::to_json(e.method.outcome.state));
  std::ofstream log(dir / "iterations.log", std::ios::binary);
  if (!log) throw Error(ErrorCode::kIo, "cannot write " + (dir / "iterations.log").string());
  log << io::iteration_log(e.method.outcome);
}

}  // namespace tka

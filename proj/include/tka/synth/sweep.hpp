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
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tka/baselines.hpp"
#include "tka/synth/scene.hpp"

namespace tka {

struct SweepOptions {
  std::vector<int> levels = {1, 2, 3, 4, 5};
  int runs = 10;
  std::uint64_t base_seed = 0;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  SolverConfig solver;
  EnergyOptions energy;
  SceneOptions scene;
  ContourBudget budget;
  int threads = 1;
  /// Angle error recorded for runs that throw.
  double censor_deg = 180.0;

  void validate() const {
    if (levels.empty() || runs < 1 || methods.empty() || threads < 1)
      throw Error(ErrorCode::kInvalidInput, "sweep needs levels, methods, runs >= 1 and threads >= 1");
    for (int L : levels) NoiseSpec::level(L);
    solver.validate();
    energy.weights.validate();
  }
};

struct SweepRow {
  int level = 0;
  int run = 0;
  Method method = Method::kProposed;
  double abs_ctr_err_deg = 0.0;
  double abs_str_err_deg = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

/// Scene, observation-noise and initialization seeds of one (level, run).
/// The scene depends on the run only, so levels share geometry.
struct RunSeeds {
  std::uint64_t scene;
  std::uint64_t observations;
  std::uint64_t initialization;
};

inline RunSeeds run_seeds(std::uint64_t base, int level, int run) {
  const auto L = static_cast<std::uint64_t>(level);
  const auto r = static_cast<std::uint64_t>(run);
  return {mix_seed(base, r), mix_seed(base, L, r, 1), mix_seed(base, L, r, 2)};
}

/// Every method on one (level, run); rows in `opt.methods` order.
inline std::vector<SweepRow> run_single(const SweepOptions& opt, int level, int run) {
  const RunSeeds seeds = run_seeds(opt.base_seed, level, run);
  const NoiseSpec noise = NoiseSpec::level(level);
  const Scenario sc = generate_scene(seeds.scene, opt.scene);
  const Observations obs = render_observations(sc, noise.observation_sd, seeds.observations, opt.budget);
  const RegistrationState init = perturb_initialization(obs.truth, noise, seeds.initialization);
  const ProblemInputs in{sc.tibia, sc.pin, sc.camera, obs.contours};
  const ResectionReport truth = make_report(sc.pin, sc.pins, sc.frame);
  std::vector<SweepRow> rows;
  for (Method m : opt.methods) {
    SweepRow row;
    row.level = level;
    row.run = run;
    row.method = m;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto r = run_method(m, init, in, opt.solver, opt.energy);
      const auto [dc, ds] = evaluate_plane_error(make_report(sc.pin, r.outcome.state.pins, sc.frame), truth);
      row.abs_ctr_err_deg = std::abs(dc);
      row.abs_str_err_deg = std::abs(ds);
      row.iterations = r.outcome.iterations;
      row.converged = r.outcome.converged;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      row.abs_ctr_err_deg = row.abs_str_err_deg = opt.censor_deg;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Rows ordered by (level, run, method) whatever the thread count.
/// `progress(done, total)` is called after each (level, run), serialized.
inline std::vector<SweepRow> run_sweep(const SweepOptions& opt,
                                       const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  opt.validate();
  struct Job {
    int level;
    int run;
  };
  std::vector<Job> jobs;
  for (int L : opt.levels)
    for (int r = 0; r < opt.runs; ++r) jobs.push_back({L, r});
  std::vector<std::vector<SweepRow>> slots(jobs.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex m;
  auto worker = [&] {
    for (std::size_t j; (j = next++) < jobs.size();) {
      slots[j] = run_single(opt, jobs[j].level, jobs[j].run);
      if (progress) {
        const std::scoped_lock lock(m);
        progress(++done, jobs.size());
      }
    }
  };
  const int n = std::min<int>(opt.threads, static_cast<int>(jobs.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  std::vector<SweepRow> out;
  for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
  return out;
}

inline constexpr const char* kSweepHeader =
    "level,run,method,abs_ctr_err_deg,abs_str_err_deg,iterations,seconds,converged";

/// `seconds` is written as NA unless `timing` is set, so reruns are byte-identical.
/// `converged` is true, false, or failed (censored row).
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool timing = false) {
  os << kSweepHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    char secs[32] = "NA";
    if (timing) std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
    std::snprintf(buf, sizeof buf, "%d,%d,%s,%.6f,%.6f,%d,%s,%s\n", r.level, r.run,
                  std::string(method_name(r.method)).c_str(), r.abs_ctr_err_deg, r.abs_str_err_deg, r.iterations,
                  secs, r.failed ? "failed" : (r.converged ? "true" : "false"));
    os << buf;
  }
}

/// Linear-interpolation quantile of unsorted values, p in [0, 1].
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Quartiles {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline Quartiles quartiles(const std::vector<double>& v) {
  return {quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
}

struct SweepCell {
  int level = 0;
  Method method = Method::kProposed;
  int runs = 0;
  int converged = 0;
  int failed = 0;
  Quartiles ctr;
  Quartiles str;
  double median_iterations = 0;
};

/// Per (level, method) statistics, ordered by level then method.
inline std::vector<SweepCell> summarize(const std::vector<SweepRow>& rows) {
  std::map<std::pair<int, int>, std::vector<const SweepRow*>> groups;
  for (const auto& r : rows) groups[{r.level, static_cast<int>(r.method)}].push_back(&r);
  std::vector<SweepCell> out;
  for (const auto& [key, g] : groups) {
    SweepCell c;
    c.level = key.first;
    c.method = static_cast<Method>(key.second);
    std::vector<double> ctr, str, it;
    for (const SweepRow* r : g) {
      ++c.runs;
      c.converged += r->converged;
      c.failed += r->failed;
      ctr.push_back(r->abs_ctr_err_deg);
      str.push_back(r->abs_str_err_deg);
      it.push_back(r->iterations);
    }
    c.ctr = quartiles(ctr);
    c.str = quartiles(str);
    c.median_iterations = quantile(it, 0.5);
    out.push_back(c);
  }
  return out;
}

inline void write_summary(std::ostream& os, const std::vector<SweepCell>& cells) {
  char buf[320];
  os << "# |dCTR| and |dSTR| in degrees: min q1 median q3 max\n";
  int level = -1;
  for (const auto& c : cells) {
    if (c.level != level) {
      level = c.level;
      std::snprintf(buf, sizeof buf, "level %d  (rotation SD %.1f rad, translation/point SD %.0f mm)\n", level,
                    NoiseSpec::level(level).rotation_sd, NoiseSpec::level(level).translation_sd);
      os << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "  %-15s ctr %6.2f %6.2f %6.2f %6.2f %7.2f | str %6.2f %6.2f %6.2f %6.2f %7.2f | "
                  "converged %d/%d failed %d | median iterations %.0f\n",
                  std::string(method_name(c.method)).c_str(), c.ctr.min, c.ctr.q1, c.ctr.median, c.ctr.q3,
                  c.ctr.max, c.str.min, c.str.q1, c.str.median, c.str.q3, c.str.max, c.converged, c.runs, c.failed,
                  c.median_iterations);
    os << buf;
  }
}

}  // namespace tka

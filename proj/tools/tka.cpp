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

// tka: resection-plane estimation from two X-ray images, synthetic data and
// sweeps, and overlay rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <png.h>

#include <CLI11.hpp>

#include "tka/overlay.hpp"
#include "tka/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumeric = 2;

void write_png(const tka::RgbImage& img, const fs::path& path) {
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw tka::Error(tka::ErrorCode::kIo, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw tka::Error(tka::ErrorCode::kIo, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

int cmd_estimate(const fs::path& config, const std::string& method, const fs::path& out_override, bool verbose) {
  tka::LoadedRun run;
  try {
    run = tka::load_run(config);
    if (!method.empty()) {
      const auto m = tka::parse_method(method);
      if (!m) throw tka::Error(tka::ErrorCode::kInvalidInput, "unknown method '" + method + "'");
      run.config.method = *m;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  run.config.solver.verbose = verbose;
  const fs::path out = out_override.empty() ? run.config.output : out_override;
  tka::EstimateResult res;
  try {
    res = tka::estimate(run);
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kExitNumeric;
  }
  try {
    tka::write_estimate(res, run.config.method, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  const auto& o = res.method.outcome;
  for (const auto& w : o.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << res.report.summary() << '\n';
  std::printf("method %s: %s after %d iterations, energy %.6g -> %.6g\n",
              std::string(tka::method_name(run.config.method)).c_str(), o.termination.c_str(), o.iterations,
              o.energies.front(), o.final_energy());
  if (res.evaluation)
    std::printf("vs ground truth: dCTR=%+.3f deg dSTR=%+.3f deg, camera error <= %.3f deg / %.3f mm\n",
                res.evaluation->dctr_deg, res.evaluation->dstr_deg, res.evaluation->max_camera_rotation_deg,
                res.evaluation->max_camera_translation_mm);
  std::printf("artifacts in %s\n", out.string().c_str());
  return o.converged ? kExitOk : kExitNumeric;
}

int cmd_simulate(std::uint64_t seed, int level, const fs::path& out) {
  try {
    const tka::SimulatedCase c = tka::simulate_case(seed, level);
    tka::write_case(c, out);
    const auto truth = tka::make_report(c.scene.pin, c.scene.pins, c.scene.frame);
    std::printf("seed %llu level %d: planned %s\nwrote %s/run.json\n", static_cast<unsigned long long>(seed), level,
                truth.summary().c_str(), out.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

int cmd_sweep(tka::SweepOptions opt, const std::vector<std::string>& methods, const fs::path& csv,
              const fs::path& summary, bool timing, bool quiet) {
  try {
    if (!methods.empty()) {
      opt.methods.clear();
      for (const auto& s : methods) {
        const auto m = tka::parse_method(s);
        if (!m) throw tka::Error(tka::ErrorCode::kInvalidInput, "unknown method '" + s + "'");
        opt.methods.push_back(*m);
      }
    }
    opt.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  const auto rows = tka::run_sweep(opt, [&](std::size_t done, std::size_t total) {
    if (!quiet) std::fprintf(stderr, "\r[%zu/%zu] scenes", done, total);
    if (!quiet && done == total) std::fputc('\n', stderr);
  });
  try {
    if (!csv.parent_path().empty()) fs::create_directories(csv.parent_path());
    std::ofstream os(csv, std::ios::binary);
    if (!os) throw tka::Error(tka::ErrorCode::kIo, "cannot write " + csv.string());
    tka::write_sweep_csv(os, rows, timing);
    const auto cells = tka::summarize(rows);
    if (!summary.empty()) {
      std::ofstream ss(summary, std::ios::binary);
      if (!ss) throw tka::Error(tka::ErrorCode::kIo, "cannot write " + summary.string());
      tka::write_summary(ss, cells);
    }
    tka::write_summary(std::cout, cells);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

int cmd_render_overlay(const fs::path& config, const fs::path& state_path, const fs::path& out) {
  std::vector<tka::RgbImage> images;
  std::vector<double> dist;
  try {
    const tka::LoadedRun run = tka::load_run(config);
    const tka::io::Json j = tka::io::read_json(state_path);
    const tka::RegistrationState s = tka::io::state_from(tka::io::Node(j, state_path.string()));
    s.check_matches(run.contours);
    for (std::size_t k = 0; k < run.contours.image_count(); ++k) {
      const auto layers = tka::overlay_layers(s, run.inputs(), k);
      images.push_back(tka::render_overlay(layers, run.camera.width, run.camera.height));
      dist.push_back(tka::overlay_distance(layers));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  try {
    fs::create_directories(out);
    for (std::size_t k = 0; k < images.size(); ++k) {
      const fs::path p = out / ("overlay_" + std::to_string(k) + ".png");
      write_png(images[k], p);
      std::printf("%s: max contour distance %.2f px\n", p.string().c_str(), dist[k]);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tibial resection-plane estimation from two intra-operative X-ray images"};
  app.require_subcommand(1);

  fs::path config, out, state, summary;
  std::string method;
  bool verbose = false;
  auto* est = app.add_subcommand("estimate", "register contours and report CTR/STR of the resection plane");
  est->add_option("--config", config, "run.json")->required();
  est->add_option("--method", method, "proposed, proj-split, proj-joint, backproj-split or backproj-joint");
  est->add_option("--out", out, "output directory (default: the config's output)");
  est->add_flag("--verbose", verbose, "per-iteration trace on stderr");

  std::uint64_t seed = 0;
  int level = 1;
  auto* sim = app.add_subcommand("simulate", "write a synthetic case that estimate consumes");
  sim->add_option("--seed", seed, "scenario seed");
  sim->add_option("--noise-level", level, "0 (noise-free) to 5")->check(CLI::Range(0, 5));
  sim->add_option("--out", out, "output directory")->required();

  tka::SweepOptions sw;
  std::vector<std::string> methods;
  bool timing = false;
  bool quiet = false;
  auto* swc = app.add_subcommand("sweep", "compare all methods over noise levels; CSV plus per-level summary");
  swc->add_option("--seed", sw.base_seed, "base seed");
  swc->add_option("--out", out, "CSV path")->required();
  swc->add_option("--summary", summary, "also write the summary to this file");
  swc->add_option("--levels", sw.levels, "noise levels")->delimiter(',')->check(CLI::Range(0, 5));
  swc->add_option("--runs", sw.runs, "runs per level")->check(CLI::PositiveNumber);
  swc->add_option("--methods", methods, "subset of methods")->delimiter(',');
  swc->add_option("--threads", sw.threads, "worker threads")->check(CLI::PositiveNumber);
  swc->add_flag("--timing", timing, "record wall-clock seconds (output no longer reproducible)");
  swc->add_flag("--quiet", quiet, "no progress output");

  auto* ov = app.add_subcommand("render-overlay", "draw contours, silhouettes and state points as PNG");
  ov->add_option("--config", config, "run.json")->required();
  ov->add_option("--state", state, "state.json")->required();
  ov->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }
  if (*est) return cmd_estimate(config, method, out, verbose);
  if (*sim) return cmd_simulate(seed, level, out);
  if (*swc) return cmd_sweep(sw, methods, out, summary, timing, quiet);
  return cmd_render_overlay(config, state, out);
}

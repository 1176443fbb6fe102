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

// Simulate one case in memory, register it, and print the resection report.
//   quickstart [seed] [noise level 0..5]

#include <cstdio>
#include <cstdlib>

#include "tka/pipeline.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;
  const int level = argc > 2 ? std::atoi(argv[2]) : 1;
  try {
    const tka::SimulatedCase c = tka::simulate_case(seed, level);
    const tka::ProblemInputs in{c.scene.tibia, c.scene.pin, c.scene.camera, c.observations.contours};
    const tka::SolveOutcome out = tka::solve(c.initial, in, tka::SolverConfig{});
    const auto truth = tka::make_report(c.scene.pin, c.scene.pins, c.scene.frame);
    const auto est = tka::make_report(c.scene.pin, out.state.pins, c.scene.frame);
    const auto [dc, ds] = tka::evaluate_plane_error(est, truth);
    std::printf("planned   %s\nestimated %s\nerror     dCTR=%+.2f deg dSTR=%+.2f deg\n", truth.summary().c_str(),
                est.summary().c_str(), dc, ds);
    std::printf("%d iterations (%s), energy %.4g -> %.4g\n", out.iterations, out.termination.c_str(),
                out.energies.front(), out.final_energy());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

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

// Every method on the same case, with the split baselines' stage log.
//   compare_methods [seed] [noise level 1..5]

#include <cstdio>
#include <cstdlib>

#include "tka/pipeline.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;
  const int level = argc > 2 ? std::atoi(argv[2]) : 2;
  try {
    const tka::SimulatedCase c = tka::simulate_case(seed, level);
    const tka::ProblemInputs in{c.scene.tibia, c.scene.pin, c.scene.camera, c.observations.contours};
    const auto truth = tka::make_report(c.scene.pin, c.scene.pins, c.scene.frame);
    std::printf("seed %llu level %d, planned %s\n", static_cast<unsigned long long>(seed), level,
                truth.summary().c_str());
    for (tka::Method m : tka::kAllMethods) {
      const std::string name(tka::method_name(m));
      try {
        const auto r = tka::run_method(m, c.initial, in, tka::SolverConfig{});
        const auto [dc, ds] =
            tka::evaluate_plane_error(tka::make_report(c.scene.pin, r.outcome.state.pins, c.scene.frame), truth);
        std::printf("%-15s |dCTR| %6.2f  |dSTR| %6.2f  iterations %3d  %s\n", name.c_str(), std::abs(dc),
                    std::abs(ds), r.outcome.iterations, r.outcome.termination.c_str());
        for (const auto& s : r.stages)
          std::printf("%17s round %d %-8s %3d it, E %.4g -> %.4g\n", "", s.round, s.stage.c_str(), s.iterations,
                      s.energies.front(), s.energies.back());
      } catch (const std::exception& e) {
        std::printf("%-15s failed: %s\n", name.c_str(), e.what());
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

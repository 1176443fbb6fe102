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

// Column-wise state nudges for finite-difference checks of the stacked Jacobian.

#pragma once

#include "tka/energy/state.hpp"
#include "tka/energy/terms.hpp"

namespace tka::test {

// Stacked residual with associations held fixed, for finite differencing.
inline Eigen::VectorXd frozen_residual(const RegistrationState& state, const Associations& assoc,
                                       const ProblemInputs& in, const EnergyOptions& o) {
  return stack(residual_blocks(state, assoc, in, o, false), StateLayout(state)).residual;
}

inline RegistrationState nudge(const RegistrationState& s, std::size_t col, double h) {
  RegistrationState out = s;
  const StateLayout L(s);
  const std::size_t n = s.image_count();
  Vec6 d = Vec6::Zero();
  if (col < 6 * n) {
    d[col % 6] = h;
    out.cameras[col / 6] = retract(out.cameras[col / 6], d);
    return out;
  }
  if (col < L.pin(0) + 12) {
    const int l = static_cast<int>((col - L.pin(0)) / 6);
    d[(col - L.pin(0)) % 6] = h;
    out.pins[l] = retract(out.pins[l], d);
    return out;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < s.tibia_points[k].size(); ++i)
      if (col >= L.tibia_point(k, i) && col < L.tibia_point(k, i) + 3) {
        out.tibia_points[k][i][col - L.tibia_point(k, i)] += h;
        return out;
      }
  for (std::size_t k = 0; k < n; ++k)
    for (int l = 0; l < kPinCount; ++l)
      for (std::size_t j = 0; j < s.pin_points[k][l].size(); ++j)
        if (col >= L.pin_point(k, l, j) && col < L.pin_point(k, l, j) + 3) {
          out.pin_points[k][l][j][col - L.pin_point(k, l, j)] += h;
          return out;
        }
  return out;
}

}  // namespace tka::test

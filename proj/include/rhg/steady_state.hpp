/*
 Copyright 2026 The rhg authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include "rhg/solver.hpp"

namespace rhg {

/// An equilibrium of the one-step game restricted to fixed points of the
/// dynamics. Each agent optimizes L^v = cost^v + lambda_s^v' (f(x,u) - x)
/// over (x, u^v) subject to the shared and local rows.
struct SteadyStateGne {
  Vec x_s;
  Vec u_s;
  std::vector<Vec> lambda_s;  ///< per-agent fixed-point multipliers
  std::vector<Vec> mult_g;    ///< coupled-row multipliers (shared block in
                              ///< Variational mode, index 0 only)
  std::vector<Vec> mult_h;    ///< local-row multipliers
  double kkt_residual = 0;
  /// Smallest slack across all inequality rows at (x_s, u_s); positive
  /// means strictly interior.
  double interiority = 0;
  bool converged = false;
  Mode mode = Mode::NonVariational;
};

/// Solves the steady-state equilibrium system by the same smoothed Newton
/// continuation as the trajectory solver. The optional guess seeds
/// (x, u) and zeros the multipliers; by default the builder cold start
/// is used.
SteadyStateGne solve_steady_state(const GameSpec& spec,
                                  const SolverOptions& opts = {},
                                  const Vec* xu_guess = nullptr);

/// Returns a copy of `spec` with the linear terminal penalty
/// lambda_s^v' x_N attached for each agent. With the penalty active the
/// steady state lifts to an exact horizon-1 equilibrium.
GameSpec terminal_penalty(const GameSpec& spec, const SteadyStateGne& ss);

}  // namespace rhg

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

#include "rhg/steady_state.hpp"

#include <optional>

namespace rhg {

/// Warm-start policy between receding-horizon steps.
enum class WarmStart : std::uint8_t {
  Cold,   ///< rebuild the default initial iterate every step
  Shift,  ///< shift the previous solution one step, append u_s
};

/// Receding-horizon run settings.
struct RunOptions {
  int N = 8;                ///< prediction horizon per step
  int T = 20;               ///< number of closed-loop steps
  WarmStart warm = WarmStart::Shift;
  bool terminal_penalty = false;  ///< attach the steady-state linear penalty
  bool store_predictions = false;
  SolverOptions solver;
};

/// Telemetry for one closed-loop step.
struct StepRecord {
  bool converged = false;
  double kkt_residual = 0;
  int iterations = 0;
  double max_violation = 0;  ///< constraint violation of the prediction
  double wall_seconds = 0;
  bool warm_used = false;    ///< shifted iterate accepted (vs cold fallback)
};

/// A finished (or truncated) closed-loop run.
struct ClosedLoopRun {
  std::vector<Vec> states;   ///< x_0..x_T (T+1 entries when completed)
  std::vector<Vec> inputs;   ///< applied joint inputs u_0..u_{T-1}
  std::vector<TrajectoryPair> predictions;  ///< when store_predictions
  std::vector<StepRecord> steps;  ///< includes the failing step, if any
  RunOptions options;
  /// Present whenever the loop needed the steady state (terminal penalty
  /// active or shift warm starts).
  std::optional<SteadyStateGne> steady;
  bool completed = false;
  int failed_at = -1;  ///< step index of the first failure, -1 if none
};

/// Runs the receding-horizon loop from x_init: solve the horizon-N problem,
/// apply the first joint input, advance the plant exactly, repeat. Truncates
/// at the first non-converged step (recorded, not retried). When `ss` is
/// null and the loop needs the steady state it is computed once up front.
ClosedLoopRun run_closed_loop(const GameSpec& spec, const Vec& x_init,
                              const RunOptions& opts = {},
                              const SteadyStateGne* ss = nullptr);

/// Shifts the stacked iterate of `prev` one step forward: drop the first
/// input, append u_s as the final input, propagate states from the plant
/// successor f(x_0, u_0), and shift multipliers with the tail block copied
/// for the appended step.
Vec shift_warm_start(const GameSpec& spec, const KktLayout& layout,
                     const GnepSolution& prev, const SteadyStateGne& ss);

/// Per-step feasibility audit of a closed-loop run.
struct FeasibilityReport {
  std::vector<std::uint8_t> feasible;  ///< solver converged, violation <= tol
  std::vector<double> violations;      ///< per-step max constraint violation
  /// Steps t that were feasible while step t+1 failed: empirical
  /// recursive-feasibility violation witnesses.
  std::vector<int> witnesses;
  bool initial_infeasible = false;  ///< the very first solve already failed
  bool recursively_feasible = true;  ///< no witnesses found
};

/// Audits a completed or truncated run: per-step convergence and violation,
/// plus any step whose successor failed. A run that fails at t = 0 reports
/// initial infeasibility and makes no recursion claim.
FeasibilityReport feasibility_probe(const ClosedLoopRun& run,
                                    double tol = 1e-8);

}  // namespace rhg

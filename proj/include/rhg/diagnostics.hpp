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

#include "rhg/rhg_sim.hpp"

namespace rhg {

/// Affine storage candidate Lambda(x) = lambda' (x - x_s) + c.
struct StorageFn {
  Vec lambda;
  Vec x_s;
  double c = 0;

  double operator()(const Vec& x) const { return lambda.dot(x - x_s) + c; }
};

/// Builds the storage candidate from a steady state: lambda is the negated
/// sum of the per-agent fixed-point multipliers, anchored at x_s with
/// offset c.
StorageFn make_storage(const SteadyStateGne& ss, double c = 0);

/// Same candidate with the offset chosen post hoc so that Lambda >= 0 on
/// every visited state (and at x_s itself).
StorageFn make_storage(const SteadyStateGne& ss,
                       const std::vector<Vec>& visited);

/// Turnpike census of one open-loop trajectory at a single threshold.
/// Distances stack state and input deviations; the terminal stage has no
/// input and is reported separately for leaving-arc checks.
struct TurnpikeReport {
  std::vector<double> dist;  ///< |(x_k,u_k) - (x_s,u_s)| for k = 0..N-1
  double end_state_dist = 0; ///< |x_N - x_s|
  double eps = 0;            ///< threshold used
  int count = 0;             ///< #k in {0..N-1} with dist <= eps
  std::vector<int> inside;   ///< the counted stage indices, ascending
  int horizon = 0;
};

/// Counts the stages of `pair` within eps of the steady pair.
TurnpikeReport turnpike_count(const TrajectoryPair& pair,
                              const SteadyStateGne& ss, double eps);

/// Census across a threshold grid, with the entry/exit stage per threshold
/// and the smallest constant C such that count >= N - C / eps^2 across the
/// grid (reported, not asserted).
struct TurnpikeProfile {
  std::vector<double> eps;  ///< thresholds, ascending
  std::vector<int> count;
  std::vector<int> entry;   ///< first counted stage, -1 when count = 0
  std::vector<int> exit;    ///< last counted stage, -1 when count = 0
  double dwell_constant = 0;
  int horizon = 0;
};

TurnpikeProfile turnpike_profile(const TrajectoryPair& pair,
                                 const SteadyStateGne& ss,
                                 const std::vector<double>& eps_grid);

/// Equilibrium-vs-optimum cost comparison at one initial condition.
struct PoaReport {
  double j_gne = 0;    ///< summed equilibrium cost
  double v_ocp = 0;    ///< population optimal value
  double ratio = 0;    ///< j_gne / v_ocp (after any shift)
  double gap = 0;      ///< j_gne - v_ocp (unshifted)
  double offset_shift = 0;  ///< per-stage constant added to both totals
  bool shifted = false;
  bool converged = false;
};

/// Solves both the equilibrium and the population problem at x_init and
/// horizon N. When the unshifted optimal value is below 1 (logarithmic
/// costs go negative), both totals are shifted by a per-stage constant that
/// lifts the optimal value to exactly 1 so the ratio stays meaningful. The
/// ratio refers to the computed equilibrium, not a supremum over all
/// equilibria.
PoaReport price_of_anarchy(const GameSpec& spec, const Vec& x_init, int N,
                           const SolverOptions& opts = {});

/// One evaluation point of the dissipation functional.
struct DissipationPoint {
  Vec x;
  Vec u;
  double supply = 0;      ///< summed stage cost minus steady cost
  double storage_gain = 0;  ///< Lambda(f(x,u)) - Lambda(x)
  double dist = 0;        ///< |(x,u) - (x_s,u_s)|
  double margin = 0;      ///< supply - storage_gain
};

/// Dissipation audit over a trajectory family. With a_star = 0 the margin
/// sign alone is the plain dissipation inequality.
struct DissipationReport {
  double a_star = 0;  ///< largest a with margin >= a * dist^2 on the set
  std::vector<DissipationPoint> points;
  std::vector<int> violations;  ///< indices with margin < 0
  bool holds = false;           ///< a_star > 0
};

/// Evaluates supply vs storage gain at every stage point (x_k, u_k),
/// k = 0..N-1, of each trajectory and reports the best uniform quadratic
/// lower bound. Points closer than dist_floor to the steady pair are
/// excluded from the a* quotient (but still checked for sign).
DissipationReport dissipation_check(const GameSpec& spec,
                                    const SteadyStateGne& ss,
                                    const StorageFn& storage,
                                    const std::vector<TrajectoryPair>& pairs,
                                    double dist_floor = 1e-8);

/// Closed-loop value decrease trace along a receding-horizon run.
struct LyapunovTrace {
  std::vector<double> v_star;   ///< offset horizon value per visited state
  std::vector<double> storage;  ///< storage at each visited state
  std::vector<double> w;        ///< v_star + storage
  std::vector<double> dw;       ///< w_{t+1} - w_t
  std::vector<double> dist;     ///< |x_t - x_s|
  double rho_tilde = 0;  ///< largest dist at which decrease failed
  /// Largest successor distance launched from inside the rho_tilde ball
  /// (0 when no step starts inside).
  double max_successor_dist = 0;
  /// Containment radius: max(rho_tilde, max_successor_dist). States inside
  /// the rho_tilde ball never leave this ball.
  double rho_hat = 0;
  bool decrease_outside = false;  ///< dw < 0 whenever dist > rho_tilde
};

/// Evaluates the combined function W = V + Lambda along a run, with the
/// horizon value V taken from the stored per-step predictions: summed stage
/// costs offset so the steady pair scores zero (terminal terms, when
/// present, offset the same way). Values inherit solver error near the
/// convergence tolerance, so dw below noise_floor counts as numerical zero;
/// rho_tilde is the largest starting distance with dw at or above the
/// floor. Steps after a solver failure are excluded. Throws
/// std::invalid_argument when the run was recorded without predictions.
LyapunovTrace lyapunov_trace(const GameSpec& spec, const ClosedLoopRun& run,
                             const SteadyStateGne& ss, const StorageFn& storage,
                             double noise_floor = 1e-12);

/// One row of a horizon sweep. A truncated run keeps converged = false and
/// records the end gap as NaN (a missing entry in exports).
struct SweepRow {
  int N = 0;
  double end_gap = 0;   ///< |x_T - x_s| after the closed loop
  double loop_cost = 0; ///< summed group cost of the applied inputs
  long iterations = 0;  ///< Newton iterations over the whole run
  bool converged = false;
};

/// Runs the closed loop across the given horizons and records the end gap
/// to the steady state. Horizons are distributed over `workers` threads
/// (0 = hardware concurrency); results are ordered by horizon regardless
/// of scheduling.
std::vector<SweepRow> convergence_sweep(const GameSpec& spec, const Vec& x_init,
                                        const std::vector<int>& horizons,
                                        const RunOptions& base,
                                        const SteadyStateGne& ss,
                                        int workers = 0);

/// Least-squares slope of log(end_gap) against N over the converged rows
/// with a positive gap; NaN when fewer than two rows qualify.
double sweep_fit_slope(const std::vector<SweepRow>& rows);

}  // namespace rhg

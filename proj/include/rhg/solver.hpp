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

#include "rhg/kkt.hpp"

namespace rhg {

/// A state-input trajectory over horizon N with its initial condition.
struct TrajectoryPair {
  std::vector<Vec> x;  ///< x_0..x_N
  std::vector<Vec> u;  ///< joint inputs u_0..u_{N-1}
  int N = 0;
  Vec x_init;
};

/// One continuation stage of the solver.
struct StageRecord {
  double eps_fb = 0;
  int iterations = 0;
  double residual = 0;
  bool converged = false;
};

/// Solver telemetry: per-stage records plus every accepted line-search step.
struct SolveTrace {
  std::vector<StageRecord> stages;
  std::vector<double> step_sizes;
};

/// Solver settings. Defaults realize the benchmark configuration: smoothing
/// continuation 1e-2 -> 1e-8 by factors of 10, per-stage tolerance
/// max(newton_tol, stage_tol_factor * eps), Armijo backtracking on the
/// squared residual norm.
struct SolverOptions {
  double fb_eps_init = 1e-2;
  double fb_eps_final = 1e-8;
  double fb_eps_factor = 0.1;
  double newton_tol = 1e-9;
  double stage_tol_factor = 0.1;
  int max_iter = 60;  ///< Newton iterations per continuation stage
  double armijo_slope = 1e-4;
  double backtrack_ratio = 0.5;
  double min_step = 1e-12;
  double feasibility_tol = 1e-8;
  Mode mode = Mode::NonVariational;
  /// Optional stacked warm-start iterate (layout of the target problem).
  /// Falls back to the cold start on size mismatch or domain failure.
  Vec warm_start_z;
};

/// An equilibrium candidate with multipliers and telemetry.
struct GnepSolution {
  TrajectoryPair pair;
  /// Dynamics multipliers [agent][k], k = 0..N; block k=N belongs to the
  /// initial-condition row.
  std::vector<std::vector<Vec>> mult_dyn;
  /// Coupled-row multipliers [agent][k]; in Variational mode a single shared
  /// set is stored at index 0.
  std::vector<std::vector<Vec>> mult_g;
  /// Local-row multipliers [agent][k]; empty inner vectors for agents
  /// without local rows.
  std::vector<std::vector<Vec>> mult_h;
  double kkt_residual = 0;
  int iterations = 0;
  bool converged = false;
  Mode mode = Mode::NonVariational;
  /// The supplied warm start passed validation and seeded the solve.
  bool warm_start_used = false;
  /// Raw stacked iterate; reusable as warm_start_z for a same-shaped solve.
  Vec z;
  SolveTrace trace;
};

/// Population optimal control solution: all inputs owned by one synthetic
/// agent minimizing the summed cost.
struct OcpSolution {
  TrajectoryPair pair;
  double value = 0;  ///< summed stage costs (+ terminal terms) of `pair`
  GnepSolution inner;
  bool converged = false;
  /// Initializations tried: 1 = cold start sufficed; up to 3 when the
  /// solve was reseeded from the equilibrium primal (see solve_ocp).
  int seed_attempts = 0;
};

/// Per-agent best-response certification report.
struct VerifyReport {
  Vec gap;            ///< J^v(candidate) - J^v(best response)
  Vec j_candidate;    ///< J^v at the candidate
  std::vector<std::uint8_t> verifiable;  ///< best-response solve converged
  bool certified = false;
};

/// Solves the horizon-N equilibrium problem from x_init. Deterministic:
/// identical inputs (including warm start) produce bit-identical iterates.
/// Non-convergence returns converged=false with the residual attached.
GnepSolution solve_gnep(const GameSpec& spec, const Vec& x_init, int N,
                        const SolverOptions& opts = {});

/// Solves the population optimal control problem: one synthetic agent owns
/// all inputs and minimizes the summed stage cost over the same constraints.
/// If the cold-started solve stalls (merged problems can trap it in flat
/// cost directions), deterministically reseeds from the equilibrium primal
/// of the original game before giving up.
OcpSolution solve_ocp(const GameSpec& spec, const Vec& x_init, int N,
                      const SolverOptions& opts = {});

/// Fixes each agent's opponents at the candidate solution, solves the
/// agent's single-agent problem cold-started, and reports the cost gaps.
/// The candidate is certified when every gap is at most
/// tol * (1 + |J^v(candidate)|) and every subproblem converged.
VerifyReport verify_gne(const GameSpec& spec, const GnepSolution& sol,
                        double tol = 1e-6, const SolverOptions& opts = {});

/// Merges all agents into a single synthetic agent with the summed cost and
/// stacked local rows; the merged game's equilibria are the optima of the
/// population problem.
GameSpec make_social_spec(const GameSpec& spec);

/// Stage-cost sum of agent v along a trajectory, including the terminal
/// term when present.
double trajectory_cost(const GameSpec& spec, int v, const TrajectoryPair& pair);

/// Summed trajectory cost over all agents.
double group_cost(const GameSpec& spec, const TrajectoryPair& pair);

/// Largest inequality violation (positive part of g and h rows) plus
/// dynamics and initial-condition defects along the pair.
double max_violation(const GameSpec& spec, const TrajectoryPair& pair);

}  // namespace rhg

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

#include "rhg/rhg_sim.hpp"

#include <chrono>

namespace rhg {

Vec shift_warm_start(const GameSpec& spec, const KktLayout& L,
                     const GnepSolution& prev, const SteadyStateGne& ss) {
  if (prev.z.size() != L.n())
    throw std::invalid_argument("previous iterate does not match the layout");
  const Dims& d = spec.dims;
  const int N = L.N();
  const int nx = d.n_x;
  const int nu = L.nu_dec();

  Vec zn = Vec::Constant(L.n(), 0.1);

  for (int k = 0; k + 1 < N; ++k)
    zn.segment(L.iu(k), nu) = prev.z.segment(L.iu(k + 1), nu);
  zn.segment(L.iu(N - 1), nu) = ss.u_s;

  Vec x = spec.f(prev.pair.x[0], prev.pair.u[0]);
  zn.segment(L.ix(0), nx) = x;
  for (int k = 0; k < N; ++k) {
    try {
      x = spec.f(x, L.joint_u(zn, k));
    } catch (const DomainError&) {
    }
    zn.segment(L.ix(k + 1), nx) = x.cwiseMax(-10.0).cwiseMin(10.0);
  }

  const int nP = static_cast<int>(L.participants().size());
  for (int pi = 0; pi < nP; ++pi) {
    int v = L.participants()[static_cast<size_t>(pi)];
    int nh = d.n_h_v[static_cast<size_t>(v)];
    for (int k = 0; k < N; ++k) {
      int s = std::min(k + 1, N - 1);
      zn.segment(L.imu(pi, k), nx) = prev.z.segment(L.imu(pi, s), nx);
      if (nh > 0)
        zn.segment(L.ilh(pi, k), nh) = prev.z.segment(L.ilh(pi, s), nh);
    }
    zn.segment(L.imu(pi, N), nx) = prev.z.segment(L.imu(pi, N), nx);
  }
  for (int b = 0; b < L.lambda_g_blocks(); ++b) {
    for (int k = 0; k < N && d.n_g > 0; ++k) {
      int s = std::min(k + 1, N - 1);
      zn.segment(L.ilg(b, k), d.n_g) = prev.z.segment(L.ilg(b, s), d.n_g);
    }
  }
  return zn;
}

ClosedLoopRun run_closed_loop(const GameSpec& spec, const Vec& x_init,
                              const RunOptions& opts,
                              const SteadyStateGne* ss_in) {
  if (opts.N < 1) throw std::invalid_argument("horizon must be >= 1");
  if (opts.T < 1) throw std::invalid_argument("step count must be >= 1");

  ClosedLoopRun run;
  run.options = opts;

  const bool need_steady =
      opts.terminal_penalty || opts.warm == WarmStart::Shift;
  if (ss_in) {
    run.steady = *ss_in;
  } else if (need_steady) {
    run.steady = solve_steady_state(spec, opts.solver);
    if (!run.steady->converged)
      throw std::runtime_error(
          "steady-state solve did not converge; cannot set up the loop");
  }

  GameSpec augmented;
  const GameSpec* active = &spec;
  if (opts.terminal_penalty) {
    augmented = terminal_penalty(spec, *run.steady);
    active = &augmented;
  }

  KktLayout layout(*active, opts.N, opts.solver.mode);

  Vec x = x_init;
  run.states.push_back(x);
  GnepSolution prev;
  bool have_prev = false;

  for (int t = 0; t < opts.T; ++t) {
    SolverOptions so = opts.solver;
    so.warm_start_z.resize(0);
    if (opts.warm == WarmStart::Shift && have_prev)
      so.warm_start_z = shift_warm_start(*active, layout, prev, *run.steady);

    auto tick = std::chrono::steady_clock::now();
    GnepSolution sol = solve_gnep(*active, x, opts.N, so);
    auto tock = std::chrono::steady_clock::now();

    StepRecord rec;
    rec.converged = sol.converged;
    rec.kkt_residual = sol.kkt_residual;
    rec.iterations = sol.iterations;
    rec.max_violation = max_violation(*active, sol.pair);
    rec.wall_seconds = std::chrono::duration<double>(tock - tick).count();
    rec.warm_used = sol.warm_start_used;
    run.steps.push_back(rec);
    if (opts.store_predictions) run.predictions.push_back(sol.pair);

    if (!sol.converged) {
      run.failed_at = t;
      return run;
    }

    x = spec.f(x, sol.pair.u[0]);
    run.states.push_back(x);
    run.inputs.push_back(sol.pair.u[0]);
    prev = std::move(sol);
    have_prev = true;
  }
  run.completed = true;
  return run;
}

FeasibilityReport feasibility_probe(const ClosedLoopRun& run, double tol) {
  FeasibilityReport rep;
  const size_t n = run.steps.size();
  rep.feasible.resize(n);
  rep.violations.resize(n);
  for (size_t t = 0; t < n; ++t) {
    const StepRecord& s = run.steps[t];
    rep.violations[t] = s.max_violation;
    rep.feasible[t] = (s.converged && s.max_violation <= tol) ? 1 : 0;
  }
  if (run.failed_at == 0) {
    rep.initial_infeasible = true;
    return rep;  // nothing preceded the failure; no recursion claim
  }
  for (size_t t = 0; t + 1 < n; ++t) {
    if (rep.feasible[t] && !rep.feasible[t + 1]) {
      rep.witnesses.push_back(static_cast<int>(t));
      rep.recursively_feasible = false;
    }
  }
  return rep;
}

}  // namespace rhg

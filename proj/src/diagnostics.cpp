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

#include "rhg/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace rhg {

StorageFn make_storage(const SteadyStateGne& ss, double c) {
  // The negated multiplier sum is the affine slope that cancels the
  // first-order variation of the group stage cost at the steady pair.
  StorageFn st;
  st.lambda = -ss.lambda_s[0];
  for (size_t v = 1; v < ss.lambda_s.size(); ++v) st.lambda -= ss.lambda_s[v];
  st.x_s = ss.x_s;
  st.c = c;
  return st;
}

StorageFn make_storage(const SteadyStateGne& ss,
                       const std::vector<Vec>& visited) {
  StorageFn st = make_storage(ss, 0.0);
  double lowest = 0.0;  // Lambda(x_s) with c = 0
  for (const Vec& x : visited) lowest = std::min(lowest, st(x));
  st.c = -lowest;
  return st;
}

namespace {

Vec stacked_steady(const SteadyStateGne& ss) {
  Vec su(ss.x_s.size() + ss.u_s.size());
  su << ss.x_s, ss.u_s;
  return su;
}

double stage_dist(const TrajectoryPair& pair, int k, const Vec& su) {
  Vec w(pair.x[static_cast<size_t>(k)].size() +
        pair.u[static_cast<size_t>(k)].size());
  w << pair.x[static_cast<size_t>(k)], pair.u[static_cast<size_t>(k)];
  return (w - su).norm();
}

}  // namespace

TurnpikeReport turnpike_count(const TrajectoryPair& pair,
                              const SteadyStateGne& ss, double eps) {
  TurnpikeReport rep;
  rep.eps = eps;
  rep.horizon = pair.N;
  const Vec su = stacked_steady(ss);
  rep.dist.reserve(static_cast<size_t>(pair.N));
  for (int k = 0; k < pair.N; ++k) {
    double dk = stage_dist(pair, k, su);
    rep.dist.push_back(dk);
    if (dk <= eps) {
      ++rep.count;
      rep.inside.push_back(k);
    }
  }
  rep.end_state_dist = (pair.x.back() - ss.x_s).norm();
  return rep;
}

TurnpikeProfile turnpike_profile(const TrajectoryPair& pair,
                                 const SteadyStateGne& ss,
                                 const std::vector<double>& eps_grid) {
  TurnpikeProfile prof;
  prof.horizon = pair.N;
  prof.eps = eps_grid;
  std::sort(prof.eps.begin(), prof.eps.end());
  for (double e : prof.eps) {
    TurnpikeReport rep = turnpike_count(pair, ss, e);
    prof.count.push_back(rep.count);
    prof.entry.push_back(rep.inside.empty() ? -1 : rep.inside.front());
    prof.exit.push_back(rep.inside.empty() ? -1 : rep.inside.back());
    // Smallest C that makes the dwell bound count >= N - C / e^2 hold at
    // this threshold; the profile keeps the binding (largest) one.
    double c = (pair.N - rep.count) * e * e;
    prof.dwell_constant = std::max(prof.dwell_constant, c);
  }
  return prof;
}

PoaReport price_of_anarchy(const GameSpec& spec, const Vec& x_init, int N,
                           const SolverOptions& opts) {
  PoaReport rep;
  GnepSolution gne = solve_gnep(spec, x_init, N, opts);
  OcpSolution ocp = solve_ocp(spec, x_init, N, opts);
  rep.converged = gne.converged && ocp.converged;
  rep.j_gne = group_cost(spec, gne.pair);
  rep.v_ocp = ocp.value;
  rep.gap = rep.j_gne - rep.v_ocp;

  // Logarithmic families drive totals negative; a per-stage constant added
  // to every agent total leaves the comparison intact and pins the optimal
  // value at 1.
  double c = std::max(0.0, (1.0 - rep.v_ocp) / static_cast<double>(N));
  rep.offset_shift = c;
  rep.shifted = c > 0;
  rep.ratio = (rep.j_gne + N * c) / (rep.v_ocp + N * c);
  return rep;
}

DissipationReport dissipation_check(const GameSpec& spec,
                                    const SteadyStateGne& ss,
                                    const StorageFn& storage,
                                    const std::vector<TrajectoryPair>& pairs,
                                    double dist_floor) {
  DissipationReport rep;
  double steady_cost = 0;
  for (int v = 0; v < spec.dims.M; ++v)
    steady_cost += spec.cost(v, ss.x_s, ss.u_s);

  const Vec su = stacked_steady(ss);

  double a_star = std::numeric_limits<double>::infinity();
  bool any_eligible = false;
  for (const TrajectoryPair& pair : pairs) {
    for (int k = 0; k < pair.N; ++k) {
      DissipationPoint pt;
      pt.x = pair.x[static_cast<size_t>(k)];
      pt.u = pair.u[static_cast<size_t>(k)];
      double stage = 0;
      for (int v = 0; v < spec.dims.M; ++v) stage += spec.cost(v, pt.x, pt.u);
      pt.supply = stage - steady_cost;
      pt.storage_gain = storage(spec.f(pt.x, pt.u)) - storage(pt.x);
      pt.dist = stage_dist(pair, k, su);
      pt.margin = pt.supply - pt.storage_gain;
      // Points at the steady pair itself give a 0/0 quotient; they are kept
      // in the report but excluded from the a* fit and the violation list.
      if (pt.dist > dist_floor) {
        any_eligible = true;
        a_star = std::min(a_star, pt.margin / (pt.dist * pt.dist));
        if (pt.margin < 0)
          rep.violations.push_back(static_cast<int>(rep.points.size()));
      }
      rep.points.push_back(std::move(pt));
    }
  }
  rep.a_star = any_eligible ? a_star : 0.0;
  rep.holds = any_eligible && rep.a_star > 0;
  return rep;
}

LyapunovTrace lyapunov_trace(const GameSpec& spec, const ClosedLoopRun& run,
                             const SteadyStateGne& ss, const StorageFn& storage,
                             double noise_floor) {
  if (run.predictions.size() != run.steps.size() || run.steps.empty())
    throw std::invalid_argument(
        "closed-loop run has no stored predictions; rerun with "
        "store_predictions enabled");

  GameSpec augmented;
  const GameSpec* active = &spec;
  if (run.options.terminal_penalty) {
    augmented = terminal_penalty(spec, *run.steady);
    active = &augmented;
  }

  // Offsets that zero the value of the all-steady prediction: one steady
  // group stage cost per stage, plus the terminal term evaluated at x_s.
  double steady_stage = 0;
  for (int v = 0; v < spec.dims.M; ++v)
    steady_stage += spec.cost(v, ss.x_s, ss.u_s);
  double steady_terminal = 0;
  if (active->has_terminal())
    for (int v = 0; v < active->dims.M; ++v)
      steady_terminal += active->terminal_lin[static_cast<size_t>(v)].dot(ss.x_s);

  size_t n = 0;
  while (n < run.steps.size() && run.steps[n].converged) ++n;

  LyapunovTrace tr;
  tr.v_star.reserve(n);
  tr.storage.reserve(n);
  tr.w.reserve(n);
  tr.dist.reserve(n);
  for (size_t t = 0; t < n; ++t) {
    const TrajectoryPair& pred = run.predictions[t];
    double value = group_cost(*active, pred) - pred.N * steady_stage -
                   steady_terminal;
    tr.v_star.push_back(value);
    tr.storage.push_back(storage(run.states[t]));
    tr.w.push_back(value + tr.storage.back());
    tr.dist.push_back((run.states[t] - ss.x_s).norm());
  }
  for (size_t t = 0; t + 1 < n; ++t) tr.dw.push_back(tr.w[t + 1] - tr.w[t]);

  tr.rho_tilde = 0.0;
  for (size_t t = 0; t < tr.dw.size(); ++t)
    if (tr.dw[t] >= noise_floor)
      tr.rho_tilde = std::max(tr.rho_tilde, tr.dist[t]);

  tr.max_successor_dist = 0.0;
  for (size_t t = 0; t < n && t + 1 < run.states.size(); ++t)
    if (tr.dist[t] <= tr.rho_tilde)
      tr.max_successor_dist = std::max(
          tr.max_successor_dist, (run.states[t + 1] - ss.x_s).norm());
  tr.rho_hat = std::max(tr.rho_tilde, tr.max_successor_dist);

  tr.decrease_outside = true;
  for (size_t t = 0; t < tr.dw.size(); ++t)
    if (tr.dist[t] > tr.rho_tilde && !(tr.dw[t] < noise_floor))
      tr.decrease_outside = false;
  return tr;
}

std::vector<SweepRow> convergence_sweep(const GameSpec& spec, const Vec& x_init,
                                        const std::vector<int>& horizons,
                                        const RunOptions& base,
                                        const SteadyStateGne& ss, int workers) {
  std::vector<SweepRow> rows(horizons.size());
  if (horizons.empty()) return rows;

  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
  }
  workers = std::min(workers, static_cast<int>(horizons.size()));

  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto work = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= horizons.size()) return;
      try {
        RunOptions o = base;
        o.N = horizons[i];
        ClosedLoopRun run = run_closed_loop(spec, x_init, o, &ss);
        SweepRow row;
        row.N = horizons[i];
        row.converged = run.completed;
        row.end_gap = run.completed
                          ? (run.states.back() - ss.x_s).norm()
                          : std::numeric_limits<double>::quiet_NaN();
        for (const StepRecord& s : run.steps) row.iterations += s.iterations;
        double cost = 0;
        try {
          for (size_t t = 0; t < run.inputs.size(); ++t)
            for (int v = 0; v < spec.dims.M; ++v)
              cost += spec.cost(v, run.states[t], run.inputs[t]);
        } catch (const DomainError&) {
          cost = std::numeric_limits<double>::quiet_NaN();
        }
        row.loop_cost = cost;
        rows[i] = row;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

double sweep_fit_slope(const std::vector<SweepRow>& rows) {
  double sn = 0, sl = 0, snn = 0, snl = 0;
  int m = 0;
  for (const SweepRow& r : rows) {
    if (!r.converged || !(r.end_gap > 0) || !std::isfinite(r.end_gap)) continue;
    double nn = static_cast<double>(r.N);
    double ll = std::log(r.end_gap);
    sn += nn;
    sl += ll;
    snn += nn * nn;
    snl += nn * ll;
    ++m;
  }
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  double denom = m * snn - sn * sn;
  return (m * snl - sn * sl) / denom;
}

}  // namespace rhg

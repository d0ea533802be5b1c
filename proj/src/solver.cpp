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

#include "rhg/solver.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace rhg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Residual evaluation that reports domain faults instead of throwing.
bool try_assemble(const GameSpec& spec, const KktLayout& L, const Vec& x_init,
                  const Vec& z, double eps, Vec& F, Mat* jac) {
  try {
    assemble_kkt(spec, L, x_init, z, eps, F, jac);
    return true;
  } catch (const DomainError&) {
    return false;
  }
}

struct NewtonOutcome {
  double residual = kInf;
  int iterations = 0;
  bool ok = false;
};

// Damped semismooth Newton on the smoothed KKT system at fixed eps.
NewtonOutcome newton_stage(const GameSpec& spec, const KktLayout& L,
                           const Vec& x_init, Vec& z, double eps, double tol,
                           const SolverOptions& opts, SolveTrace& trace) {
  NewtonOutcome out;
  Vec F, F_trial;
  Mat J;
  for (;;) {
    if (!try_assemble(spec, L, x_init, z, eps, F, &J)) {
      out.residual = kInf;
      return out;
    }
    out.residual = F.lpNorm<Eigen::Infinity>();
    if (out.residual <= tol) {
      out.ok = true;
      return out;
    }
    if (out.iterations >= opts.max_iter) return out;

    Vec d = J.partialPivLu().solve(-F);
    double m0 = 0.5 * F.squaredNorm();
    double alpha = 1.0;
    for (;;) {
      bool evald = try_assemble(spec, L, x_init, z + alpha * d, eps, F_trial,
                                nullptr);
      if (evald) {
        double m_trial = 0.5 * F_trial.squaredNorm();
        if (m_trial <= (1.0 - 2.0 * opts.armijo_slope * alpha) * m0) break;
      }
      alpha *= opts.backtrack_ratio;
      if (alpha < opts.min_step) return out;
    }
    z += alpha * d;
    trace.step_sizes.push_back(alpha);
    ++out.iterations;
  }
}

// Default initial iterate: fill 0.1, seed states by rolling the cold input
// forward (clamped so divergent dynamics cannot plant a wild guess).
Vec cold_start(const GameSpec& spec, const KktLayout& L, const Vec& x_init) {
  const Dims& d = spec.dims;
  Vec z = Vec::Constant(L.n(), 0.1);
  Vec x = x_init;
  z.segment(L.ix(0), d.n_x) = x;
  for (int k = 0; k < L.N(); ++k) {
    for (int v : L.participants()) {
      int nv = d.n_u_v[static_cast<size_t>(v)];
      z.segment(L.iu_v(k, v), nv) = spec.cold_u.segment(d.u_offset(v), nv);
    }
    try {
      x = spec.f(x, L.joint_u(z, k));
    } catch (const DomainError&) {
    }
    z.segment(L.ix(k + 1), d.n_x) = x.cwiseMax(-10.0).cwiseMin(10.0);
  }
  return z;
}

// A warm start is usable only if every stage cost along it is evaluable.
bool warm_start_valid(const GameSpec& spec, const KktLayout& L, const Vec& z) {
  for (int k = 0; k < L.N(); ++k) {
    Vec xk = z.segment(L.ix(k), spec.dims.n_x);
    Vec uk = L.joint_u(z, k);
    for (int v = 0; v < spec.dims.M; ++v) {
      try {
        spec.cost(v, xk, uk);
      } catch (const DomainError&) {
        return false;
      }
    }
  }
  return true;
}

GnepSolution solve_on_layout(const GameSpec& spec, const KktLayout& L,
                             const Vec& x_init, const SolverOptions& opts) {
  if (!(opts.fb_eps_factor > 0.0 && opts.fb_eps_factor < 1.0))
    throw std::invalid_argument("fb_eps_factor must lie in (0, 1)");

  GnepSolution sol;
  sol.mode = L.mode();

  Vec z;
  if (opts.warm_start_z.size() == L.n() &&
      warm_start_valid(spec, L, opts.warm_start_z)) {
    z = opts.warm_start_z;
    sol.warm_start_used = true;
  } else {
    z = cold_start(spec, L, x_init);
  }

  double eps = opts.fb_eps_init;
  bool ok = false;
  double residual = kInf;
  for (;;) {
    bool last = eps <= opts.fb_eps_final * 1.0001;
    double tol = last ? opts.newton_tol
                      : std::max(opts.newton_tol, opts.stage_tol_factor * eps);
    NewtonOutcome out = newton_stage(spec, L, x_init, z, eps, tol, opts,
                                     sol.trace);
    sol.trace.stages.push_back({eps, out.iterations, out.residual, out.ok});
    sol.iterations += out.iterations;
    residual = out.residual;
    ok = out.ok;
    if (!ok || last) break;
    eps *= opts.fb_eps_factor;
  }

  sol.kkt_residual = residual;
  sol.converged = ok;
  sol.z = z;

  const Dims& d = spec.dims;
  const int N = L.N();
  sol.pair.N = N;
  sol.pair.x_init = x_init;
  sol.pair.x.resize(static_cast<size_t>(N + 1));
  for (int k = 0; k <= N; ++k)
    sol.pair.x[static_cast<size_t>(k)] = z.segment(L.ix(k), d.n_x);
  sol.pair.u.resize(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) sol.pair.u[static_cast<size_t>(k)] = L.joint_u(z, k);

  const int nP = static_cast<int>(L.participants().size());
  sol.mult_dyn.resize(static_cast<size_t>(nP));
  sol.mult_h.resize(static_cast<size_t>(nP));
  for (int pi = 0; pi < nP; ++pi) {
    auto& md = sol.mult_dyn[static_cast<size_t>(pi)];
    md.resize(static_cast<size_t>(N + 1));
    for (int k = 0; k <= N; ++k) md[static_cast<size_t>(k)] = z.segment(L.imu(pi, k), d.n_x);
    int v = L.participants()[static_cast<size_t>(pi)];
    int nh = d.n_h_v[static_cast<size_t>(v)];
    auto& mh = sol.mult_h[static_cast<size_t>(pi)];
    mh.resize(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k)
      mh[static_cast<size_t>(k)] = nh > 0 ? Vec(z.segment(L.ilh(pi, k), nh)) : Vec(0);
  }
  sol.mult_g.resize(static_cast<size_t>(L.lambda_g_blocks()));
  for (int b = 0; b < L.lambda_g_blocks(); ++b) {
    auto& mg = sol.mult_g[static_cast<size_t>(b)];
    mg.resize(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k)
      mg[static_cast<size_t>(k)] =
          d.n_g > 0 ? Vec(z.segment(L.ilg(b, k), d.n_g)) : Vec(0);
  }
  return sol;
}

}  // namespace

GnepSolution solve_gnep(const GameSpec& spec, const Vec& x_init, int N,
                        const SolverOptions& opts) {
  KktLayout L(spec, N, opts.mode);
  return solve_on_layout(spec, L, x_init, opts);
}

GameSpec make_social_spec(const GameSpec& spec) {
  auto base = std::make_shared<const GameSpec>(spec);
  GameSpec s;
  s.name = spec.name + "_social";
  s.dims.M = 1;
  s.dims.n_x = spec.dims.n_x;
  s.dims.n_u_v = {spec.dims.n_u()};
  s.dims.n_g = spec.dims.n_g;
  s.dims.n_h_v = {spec.dims.n_h_total()};

  s.f = base->f;
  s.f_jac = base->f_jac;
  s.g = base->g;
  s.g_jac = base->g_jac;

  s.cost = [base](int, const Vec& x, const Vec& u) {
    double total = 0;
    for (int w = 0; w < base->dims.M; ++w) total += base->cost(w, x, u);
    return total;
  };
  s.cost_grad = [base](int, const Vec& x, const Vec& u) {
    Vec total = base->cost_grad(0, x, u);
    for (int w = 1; w < base->dims.M; ++w) total += base->cost_grad(w, x, u);
    return total;
  };
  s.cost_hess = [base](int, const Vec& x, const Vec& u) {
    Mat total = base->cost_hess(0, x, u);
    for (int w = 1; w < base->dims.M; ++w) total += base->cost_hess(w, x, u);
    return total;
  };

  s.h = [base](int, const Vec& u_full) {
    Vec out(base->dims.n_h_total());
    int r = 0;
    for (int w = 0; w < base->dims.M; ++w) {
      int nh = base->dims.n_h_v[static_cast<size_t>(w)];
      if (nh == 0) continue;
      out.segment(r, nh) = base->h(
          w, u_full.segment(base->dims.u_offset(w),
                            base->dims.n_u_v[static_cast<size_t>(w)]));
      r += nh;
    }
    return out;
  };
  s.h_jac = [base](int, const Vec& u_full) {
    Mat out = Mat::Zero(base->dims.n_h_total(), base->dims.n_u());
    int r = 0;
    for (int w = 0; w < base->dims.M; ++w) {
      int nh = base->dims.n_h_v[static_cast<size_t>(w)];
      if (nh == 0) continue;
      int o = base->dims.u_offset(w);
      int nw = base->dims.n_u_v[static_cast<size_t>(w)];
      out.block(r, o, nh, nw) = base->h_jac(w, u_full.segment(o, nw));
      r += nh;
    }
    return out;
  };

  if (spec.has_terminal()) {
    Vec sum = spec.terminal_lin[0];
    for (size_t v = 1; v < spec.terminal_lin.size(); ++v)
      sum += spec.terminal_lin[v];
    s.terminal_lin = {sum};
  }
  s.offset_mode = spec.offset_mode;
  s.cold_u = spec.cold_u;
  s.cold_x = spec.cold_x;
  s.default_x0 = spec.default_x0;
  s.sample_lo = spec.sample_lo;
  s.sample_hi = spec.sample_hi;
  return s;
}

OcpSolution solve_ocp(const GameSpec& spec, const Vec& x_init, int N,
                      const SolverOptions& opts) {
  GameSpec social = make_social_spec(spec);
  OcpSolution out;
  out.inner = solve_gnep(social, x_init, N, opts);
  out.seed_attempts = 1;

  // Merging the agents can open long flat cost directions (inputs trading
  // off inside an active aggregate row) that trap a cold-started iterate in
  // a spurious merit minimum. The equilibrium primal of the original game
  // is feasible for the merged problem and close to optimal, so on failure
  // reseed from it, escalating the multiplier fill once.
  if (!out.inner.converged && opts.warm_start_z.size() == 0) {
    GnepSolution eq = solve_gnep(spec, x_init, N, opts);
    if (eq.converged) {
      KktLayout layout(social, N, opts.mode);
      for (double fill : {0.1, 0.5}) {
        Vec z = Vec::Constant(layout.n(), fill);
        for (int k = 0; k <= N; ++k)
          z.segment(layout.ix(k), spec.dims.n_x) =
              eq.pair.x[static_cast<size_t>(k)];
        for (int k = 0; k < N; ++k)
          z.segment(layout.iu(k), spec.dims.n_u()) =
              eq.pair.u[static_cast<size_t>(k)];
        SolverOptions retry = opts;
        retry.warm_start_z = std::move(z);
        ++out.seed_attempts;
        out.inner = solve_gnep(social, x_init, N, retry);
        if (out.inner.converged) break;
      }
    }
  }
  out.pair = out.inner.pair;
  out.converged = out.inner.converged;
  out.value = group_cost(spec, out.pair);
  return out;
}

VerifyReport verify_gne(const GameSpec& spec, const GnepSolution& sol,
                        double tol, const SolverOptions& opts) {
  const int M = spec.dims.M;
  VerifyReport rep;
  rep.gap = Vec::Zero(M);
  rep.j_candidate = Vec::Zero(M);
  rep.verifiable.assign(static_cast<size_t>(M), 0);
  rep.certified = true;

  SolverOptions br_opts = opts;
  br_opts.warm_start_z.resize(0);  // best responses are solved cold

  for (int v = 0; v < M; ++v) {
    rep.j_candidate(v) = trajectory_cost(spec, v, sol.pair);
    KktLayout L(spec, sol.pair.N, br_opts.mode, {v}, sol.pair.u);
    GnepSolution br = solve_on_layout(spec, L, sol.pair.x_init, br_opts);
    rep.verifiable[static_cast<size_t>(v)] = br.converged ? 1 : 0;
    if (!br.converged) {
      rep.certified = false;
      continue;
    }
    rep.gap(v) = rep.j_candidate(v) - trajectory_cost(spec, v, br.pair);
    if (!(rep.gap(v) <= tol * (1.0 + std::abs(rep.j_candidate(v)))))
      rep.certified = false;
  }
  return rep;
}

double trajectory_cost(const GameSpec& spec, int v, const TrajectoryPair& pair) {
  double total = 0;
  for (int k = 0; k < pair.N; ++k)
    total += spec.cost(v, pair.x[static_cast<size_t>(k)], pair.u[static_cast<size_t>(k)]);
  total += spec.terminal_cost(v, pair.x[static_cast<size_t>(pair.N)]);
  return total;
}

double group_cost(const GameSpec& spec, const TrajectoryPair& pair) {
  double total = 0;
  for (int v = 0; v < spec.dims.M; ++v) total += trajectory_cost(spec, v, pair);
  return total;
}

double max_violation(const GameSpec& spec, const TrajectoryPair& pair) {
  const Dims& d = spec.dims;
  double worst = 0;
  worst = std::max(worst,
                   (pair.x[0] - pair.x_init).lpNorm<Eigen::Infinity>());
  for (int k = 0; k < pair.N; ++k) {
    const Vec& xk = pair.x[static_cast<size_t>(k)];
    const Vec& uk = pair.u[static_cast<size_t>(k)];
    worst = std::max(worst, (spec.f(xk, uk) - pair.x[static_cast<size_t>(k + 1)])
                                .lpNorm<Eigen::Infinity>());
    if (d.n_g > 0) worst = std::max(worst, spec.g(xk, uk).maxCoeff());
    for (int v = 0; v < d.M; ++v) {
      int nh = d.n_h_v[static_cast<size_t>(v)];
      if (nh == 0) continue;
      Vec uv = uk.segment(d.u_offset(v), d.n_u_v[static_cast<size_t>(v)]);
      worst = std::max(worst, spec.h(v, uv).maxCoeff());
    }
  }
  return worst;
}

}  // namespace rhg

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

#include "rhg/steady_state.hpp"

#include <cmath>
#include <limits>

namespace rhg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Index bookkeeping of the one-step fixed-point KKT system:
//   x (n_x), u (n_u), lambda^v (n_x per agent), lambda_g blocks
//   (n_g per block), lambda_h^v (n_h_v per agent).
struct SteadyLayout {
  const Dims* d;
  Mode mode;
  int ox = 0, ou, om, olg, olh, n;
  int n_lg_blocks;

  SteadyLayout(const Dims& dims, Mode m) : d(&dims), mode(m) {
    ou = dims.n_x;
    om = ou + dims.n_u();
    olg = om + dims.M * dims.n_x;
    n_lg_blocks = (m == Mode::Variational) ? 1 : dims.M;
    olh = olg + n_lg_blocks * dims.n_g;
    n = olh + dims.n_h_total();
  }
  int imu(int v) const { return om + v * d->n_x; }
  int ilg(int v) const {
    int b = (mode == Mode::Variational) ? 0 : v;
    return olg + b * d->n_g;
  }
  int ilh(int v) const {
    int base = olh;
    for (int j = 0; j < v; ++j) base += d->n_h_v[static_cast<size_t>(j)];
    return base;
  }
};

void assemble_steady(const GameSpec& spec, const SteadyLayout& L, const Vec& z,
                     double eps, Vec& F, Mat* jac) {
  const Dims& d = spec.dims;
  const int nx = d.n_x, nu = d.n_u(), ng = d.n_g, M = d.M;
  F.setZero(L.n);
  if (jac) jac->setZero(L.n, L.n);

  Vec x = z.segment(L.ox, nx), u = z.segment(L.ou, nu);
  Mat fj = spec.f_jac(x, u);
  Mat fx_mI = fj.leftCols(nx) - Mat::Identity(nx, nx);
  Vec gv;
  Mat gj;
  if (ng > 0) {
    gv = spec.g(x, u);
    gj = spec.g_jac(x, u);
  }

  int r = 0;
  for (int v = 0; v < M; ++v) {
    Vec grad = spec.cost_grad(v, x, u);
    Vec row = grad.head(nx) + fx_mI.transpose() * z.segment(L.imu(v), nx);
    if (ng > 0)
      row += gj.leftCols(nx).transpose() * z.segment(L.ilg(v), ng);
    F.segment(r, nx) = row;
    if (jac) {
      Mat H = spec.cost_hess(v, x, u);
      jac->block(r, L.ox, nx, nx) += H.topLeftCorner(nx, nx);
      jac->block(r, L.ou, nx, nu) += H.topRightCorner(nx, nu);
      jac->block(r, L.imu(v), nx, nx) += fx_mI.transpose();
      if (ng > 0)
        jac->block(r, L.ilg(v), nx, ng) += gj.leftCols(nx).transpose();
    }
    r += nx;
  }
  for (int v = 0; v < M; ++v) {
    int nv = d.n_u_v[static_cast<size_t>(v)];
    int o = d.u_offset(v);
    int nh = d.n_h_v[static_cast<size_t>(v)];
    Vec grad = spec.cost_grad(v, x, u);
    Vec row = grad.segment(nx + o, nv) +
              fj.middleCols(nx + o, nv).transpose() * z.segment(L.imu(v), nx);
    if (ng > 0)
      row += gj.middleCols(nx + o, nv).transpose() * z.segment(L.ilg(v), ng);
    Mat hj;
    if (nh > 0) {
      hj = spec.h_jac(v, u.segment(o, nv));
      row += hj.transpose() * z.segment(L.ilh(v), nh);
    }
    F.segment(r, nv) = row;
    if (jac) {
      Mat H = spec.cost_hess(v, x, u);
      jac->block(r, L.ox, nv, nx) += H.block(nx + o, 0, nv, nx);
      jac->block(r, L.ou, nv, nu) += H.block(nx + o, nx, nv, nu);
      jac->block(r, L.imu(v), nv, nx) += fj.middleCols(nx + o, nv).transpose();
      if (ng > 0)
        jac->block(r, L.ilg(v), nv, ng) += gj.middleCols(nx + o, nv).transpose();
      if (nh > 0) jac->block(r, L.ilh(v), nv, nh) += hj.transpose();
    }
    r += nv;
  }
  F.segment(r, nx) = spec.f(x, u) - x;
  if (jac) {
    jac->block(r, L.ox, nx, nx) += fx_mI;
    jac->block(r, L.ou, nx, nu) += fj.rightCols(nu);
  }
  r += nx;
  for (int b = 0; b < L.n_lg_blocks; ++b) {
    for (int i = 0; i < ng; ++i) {
      double lam = z(L.olg + b * ng + i);
      F(r) = fb_phi(-gv(i), lam, eps);
      if (jac) {
        auto [da, db] = fb_dphi(-gv(i), lam, eps);
        jac->block(r, L.ox, 1, nx) -= da * gj.row(i).head(nx);
        jac->block(r, L.ou, 1, nu) -= da * gj.row(i).tail(nu);
        (*jac)(r, L.olg + b * ng + i) += db;
      }
      ++r;
    }
  }
  for (int v = 0; v < M; ++v) {
    int nh = d.n_h_v[static_cast<size_t>(v)];
    if (nh == 0) continue;
    int nv = d.n_u_v[static_cast<size_t>(v)];
    int o = d.u_offset(v);
    Vec hv = spec.h(v, u.segment(o, nv));
    Mat hj = spec.h_jac(v, u.segment(o, nv));
    for (int i = 0; i < nh; ++i) {
      double lam = z(L.ilh(v) + i);
      F(r) = fb_phi(-hv(i), lam, eps);
      if (jac) {
        auto [da, db] = fb_dphi(-hv(i), lam, eps);
        jac->block(r, L.ou + o, 1, nv) -= da * hj.row(i);
        (*jac)(r, L.ilh(v) + i) += db;
      }
      ++r;
    }
  }
}

bool try_assemble_steady(const GameSpec& spec, const SteadyLayout& L,
                         const Vec& z, double eps, Vec& F, Mat* jac) {
  try {
    assemble_steady(spec, L, z, eps, F, jac);
    return true;
  } catch (const DomainError&) {
    return false;
  }
}

}  // namespace

SteadyStateGne solve_steady_state(const GameSpec& spec,
                                  const SolverOptions& opts,
                                  const Vec* xu_guess) {
  const Dims& d = spec.dims;
  SteadyLayout L(d, opts.mode);

  Vec z = Vec::Constant(L.n, 0.1);
  if (xu_guess) {
    z.segment(L.ox, d.n_x) = xu_guess->head(d.n_x);
    z.segment(L.ou, d.n_u()) = xu_guess->tail(d.n_u());
  } else {
    z.segment(L.ox, d.n_x) = spec.cold_x;
    z.segment(L.ou, d.n_u()) = spec.cold_u;
  }

  SteadyStateGne out;
  out.mode = opts.mode;

  Vec F, F_trial;
  Mat J;
  double eps = opts.fb_eps_init;
  double residual = kInf;
  bool ok = false;
  for (;;) {
    bool last = eps <= opts.fb_eps_final * 1.0001;
    double tol = last ? opts.newton_tol
                      : std::max(opts.newton_tol, opts.stage_tol_factor * eps);
    int it = 0;
    ok = false;
    for (;;) {
      if (!try_assemble_steady(spec, L, z, eps, F, &J)) {
        residual = kInf;
        break;
      }
      residual = F.lpNorm<Eigen::Infinity>();
      if (residual <= tol) {
        ok = true;
        break;
      }
      if (it >= opts.max_iter) break;
      Vec dz = J.partialPivLu().solve(-F);
      double m0 = 0.5 * F.squaredNorm();
      double alpha = 1.0;
      bool stepped = false;
      for (;;) {
        if (try_assemble_steady(spec, L, z + alpha * dz, eps, F_trial,
                                nullptr) &&
            0.5 * F_trial.squaredNorm() <=
                (1.0 - 2.0 * opts.armijo_slope * alpha) * m0) {
          stepped = true;
          break;
        }
        alpha *= opts.backtrack_ratio;
        if (alpha < opts.min_step) break;
      }
      if (!stepped) break;
      z += alpha * dz;
      ++it;
    }
    if (!ok || last) break;
    eps *= opts.fb_eps_factor;
  }

  out.kkt_residual = residual;
  out.converged = ok;
  out.x_s = z.segment(L.ox, d.n_x);
  out.u_s = z.segment(L.ou, d.n_u());
  out.lambda_s.resize(static_cast<size_t>(d.M));
  for (int v = 0; v < d.M; ++v)
    out.lambda_s[static_cast<size_t>(v)] = z.segment(L.imu(v), d.n_x);
  out.mult_g.resize(static_cast<size_t>(L.n_lg_blocks));
  for (int b = 0; b < L.n_lg_blocks; ++b)
    out.mult_g[static_cast<size_t>(b)] =
        d.n_g > 0 ? Vec(z.segment(L.olg + b * d.n_g, d.n_g)) : Vec(0);
  out.mult_h.resize(static_cast<size_t>(d.M));
  for (int v = 0; v < d.M; ++v) {
    int nh = d.n_h_v[static_cast<size_t>(v)];
    out.mult_h[static_cast<size_t>(v)] =
        nh > 0 ? Vec(z.segment(L.ilh(v), nh)) : Vec(0);
  }

  // Interiority: smallest slack over every inequality row at the solution.
  double slack = kInf;
  try {
    if (d.n_g > 0) slack = std::min(slack, -spec.g(out.x_s, out.u_s).maxCoeff());
    for (int v = 0; v < d.M; ++v) {
      int nh = d.n_h_v[static_cast<size_t>(v)];
      if (nh == 0) continue;
      Vec uv = out.u_s.segment(d.u_offset(v), d.n_u_v[static_cast<size_t>(v)]);
      slack = std::min(slack, -spec.h(v, uv).maxCoeff());
    }
  } catch (const DomainError&) {
    slack = -kInf;
  }
  out.interiority = slack;
  return out;
}

GameSpec terminal_penalty(const GameSpec& spec, const SteadyStateGne& ss) {
  GameSpec out = spec;
  out.terminal_lin = ss.lambda_s;
  return out;
}

}  // namespace rhg

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

#include "rhg/builders.hpp"

#include <cmath>

namespace rhg {

namespace {

void require(bool ok, const std::string& field, const std::string& reason) {
  if (!ok) throw std::invalid_argument(field + ": " + reason);
}

}  // namespace

GameSpec build_lq_coupled(const LqCoupledParams& p) {
  require(p.input_box > 0, "input_box", "must be positive");
  require(p.aggregate_box > 0, "aggregate_box", "must be positive");
  require(p.state_box > 0, "state_box", "must be positive");
  require(p.R[0][0] > 0 && p.R[1][1] > 0, "R", "diagonal must be positive");
  require(p.Q[0] >= 0 && p.Q[1] >= 0, "Q", "must be nonnegative");

  GameSpec s;
  s.name = "lq_coupled";
  s.dims.M = 2;
  s.dims.n_x = 1;
  s.dims.n_u_v = {1, 1};
  s.dims.n_g = 4;
  s.dims.n_h_v = {2, 2};

  const double A = p.A;
  const Eigen::RowVector2d B(p.B1, p.B2);
  const auto R = p.R;
  const auto Q = p.Q;
  const double xref = p.x_ref;

  s.f = [A, B](const Vec& x, const Vec& u) {
    Vec out(1);
    out(0) = A * x(0) + B * u;
    return out;
  };
  s.f_jac = [A, B](const Vec&, const Vec&) {
    Mat J(1, 3);
    J << A, B(0), B(1);
    return J;
  };

  s.cost = [R, Q, xref](int v, const Vec& x, const Vec& u) {
    double ru = R[v][0] * u(0) + R[v][1] * u(1);
    double dx = x(0) - xref;
    return u(v) * ru + Q[v] * dx * dx;
  };
  s.cost_grad = [R, Q, xref](int v, const Vec& x, const Vec& u) {
    Vec grad = Vec::Zero(3);
    grad(0) = 2.0 * Q[v] * (x(0) - xref);
    for (int j = 0; j < 2; ++j) grad(1 + j) = R[v][j] * u(v);
    grad(1 + v) += R[v][0] * u(0) + R[v][1] * u(1);
    return grad;
  };
  s.cost_hess = [R, Q](int v, const Vec&, const Vec&) {
    Mat H = Mat::Zero(3, 3);
    H(0, 0) = 2.0 * Q[v];
    for (int j = 0; j < 2; ++j) {
      H(1 + v, 1 + j) += R[v][j];
      H(1 + j, 1 + v) += R[v][j];
    }
    return H;
  };

  const double agg = p.aggregate_box;
  const double sb = p.state_box;
  s.g = [agg, sb](const Vec& x, const Vec& u) {
    double su = u(0) + u(1);
    Vec out(4);
    out << su - agg, -su - agg, x(0) - sb, -x(0) - sb;
    return out;
  };
  s.g_jac = [](const Vec&, const Vec&) {
    Mat J(4, 3);
    J << 0, 1, 1, 0, -1, -1, 1, 0, 0, -1, 0, 0;
    return J;
  };

  const double ib = p.input_box;
  s.h = [ib](int, const Vec& uv) {
    Vec out(2);
    out << uv(0) - ib, -uv(0) - ib;
    return out;
  };
  s.h_jac = [](int, const Vec&) {
    Mat J(2, 1);
    J << 1, -1;
    return J;
  };

  s.cold_u = Vec::Zero(2);
  s.cold_x = Vec::Zero(1);
  s.default_x0 = Vec::Constant(1, p.x0_default);

  s.sample_lo = Vec(3);
  s.sample_lo << -sb, -ib, -ib;
  s.sample_hi = Vec(3);
  s.sample_hi << sb, ib, ib;
  return s;
}

GameSpec build_econ_growth(const EconGrowthParams& p) {
  require(p.q[0] > 0 && p.q[1] > 0, "q", "must be positive");
  require(p.r[0] > 0 && p.r[1] > 0, "r", "must be positive");
  require(p.alpha[0] > 0 && p.alpha[0] < 1 && p.alpha[1] > 0 && p.alpha[1] < 1,
          "alpha", "must lie in (0, 1)");
  require(p.aggregate_lo > 0, "aggregate_lo", "must be positive");
  require(p.aggregate_hi > p.aggregate_lo, "aggregate_hi",
          "must exceed aggregate_lo");
  require(p.state_hi > 0, "state_hi", "must be positive");

  GameSpec s;
  s.name = "econ_growth";
  s.dims.M = 2;
  s.dims.n_x = 2;
  s.dims.n_u_v = {1, 1};
  s.dims.n_g = 6;
  s.dims.n_h_v = {0, 0};

  const auto q = p.q;
  const auto r = p.r;
  const auto al = p.alpha;

  s.f = [](const Vec&, const Vec& u) { return Vec(u); };
  s.f_jac = [](const Vec&, const Vec&) {
    Mat J = Mat::Zero(2, 4);
    J(0, 2) = 1.0;
    J(1, 3) = 1.0;
    return J;
  };

  // Production-minus-investment argument of the logarithmic utility.
  auto cons = [q, r, al](int v, const Vec& x, const Vec& u) {
    return q[v] * std::pow(x(v), al[v]) - r[v] * u(v) * (u(0) + u(1));
  };
  auto cons_grad = [q, r, al](int v, const Vec& x, const Vec& u) {
    Vec d = Vec::Zero(4);
    d(v) = q[v] * al[v] * std::pow(x(v), al[v] - 1.0);
    d(2 + v) = -r[v] * ((u(0) + u(1)) + u(v));
    d(2 + (1 - v)) = -r[v] * u(v);
    return d;
  };
  auto cons_hess = [q, r, al](int v, const Vec& x, const Vec&) {
    Mat H = Mat::Zero(4, 4);
    H(v, v) = q[v] * al[v] * (al[v] - 1.0) * std::pow(x(v), al[v] - 2.0);
    H(2 + v, 2 + v) = -2.0 * r[v];
    H(2 + v, 2 + (1 - v)) = -r[v];
    H(2 + (1 - v), 2 + v) = -r[v];
    return H;
  };
  auto guard = [cons](int v, const Vec& x, const Vec& u) {
    if (x(v) <= 0.0)
      throw DomainError("stage cost undefined: capital must be positive", x, u, v);
    double c = cons(v, x, u);
    if (c <= 0.0)
      throw DomainError("stage cost undefined: consumption must be positive", x,
                        u, v);
    return c;
  };

  s.cost = [guard](int v, const Vec& x, const Vec& u) {
    return -std::log(guard(v, x, u));
  };
  s.cost_grad = [guard, cons_grad](int v, const Vec& x, const Vec& u) {
    double c = guard(v, x, u);
    return Vec(-cons_grad(v, x, u) / c);
  };
  s.cost_hess = [guard, cons_grad, cons_hess](int v, const Vec& x, const Vec& u) {
    double c = guard(v, x, u);
    Vec d = cons_grad(v, x, u);
    return Mat(-cons_hess(v, x, u) / c + d * d.transpose() / (c * c));
  };

  const double lo = p.aggregate_lo, hi = p.aggregate_hi, xh = p.state_hi;
  s.g = [lo, hi, xh](const Vec& x, const Vec& u) {
    double su = u(0) + u(1);
    Vec out(6);
    out << lo - su, su - hi, -x(0), x(0) - xh, -x(1), x(1) - xh;
    return out;
  };
  s.g_jac = [](const Vec&, const Vec&) {
    Mat J(6, 4);
    J << 0, 0, -1, -1, 0, 0, 1, 1, -1, 0, 0, 0, 1, 0, 0, 0, 0, -1, 0, 0, 0, 1, 0,
        0;
    return J;
  };

  s.h = [](int, const Vec&) { return Vec(0); };
  s.h_jac = [](int, const Vec&) { return Mat(0, 1); };

  s.cold_u = Vec::Constant(2, 0.5);
  s.cold_x = Vec::Ones(2);
  s.default_x0 = Vec(2);
  s.default_x0 << p.x0_default[0], p.x0_default[1];

  s.sample_lo = Vec(4);
  s.sample_lo << 0.1, 0.1, 0.05, 0.05;
  s.sample_hi = Vec(4);
  s.sample_hi << xh, xh, 2.0, 2.0;
  return s;
}

double DerivCheckReport::max_error() const {
  return std::max({f_jac, cost_grad, cost_hess, g_jac, h_jac});
}

namespace {

// Relative infinity-norm mismatch between an analytic block and its
// finite-difference estimate.
double rel_err(const Mat& analytic, const Mat& fd) {
  double scale = 1.0 + analytic.cwiseAbs().maxCoeff();
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

DerivCheckReport check_derivatives(const GameSpec& spec, const Vec& x,
                                   const Vec& u, double h) {
  const int nx = spec.dims.n_x;
  const int nu = spec.dims.n_u();
  const int nz = nx + nu;
  DerivCheckReport rep;

  auto split = [&](const Vec& w) {
    return std::make_pair(Vec(w.head(nx)), Vec(w.tail(nu)));
  };
  Vec w0(nz);
  w0 << x, u;

  auto central_vec = [&](auto&& fn, int rows) {
    Mat J(rows, nz);
    for (int j = 0; j < nz; ++j) {
      Vec wp = w0, wm = w0;
      wp(j) += h;
      wm(j) -= h;
      auto [xp, up] = split(wp);
      auto [xm, um] = split(wm);
      J.col(j) = (fn(xp, up) - fn(xm, um)) / (2.0 * h);
    }
    return J;
  };

  rep.f_jac = rel_err(spec.f_jac(x, u), central_vec(spec.f, nx));
  if (spec.dims.n_g > 0)
    rep.g_jac = rel_err(spec.g_jac(x, u), central_vec(spec.g, spec.dims.n_g));

  for (int v = 0; v < spec.dims.M; ++v) {
    Mat grad_fd(1, nz);
    for (int j = 0; j < nz; ++j) {
      Vec wp = w0, wm = w0;
      wp(j) += h;
      wm(j) -= h;
      auto [xp, up] = split(wp);
      auto [xm, um] = split(wm);
      grad_fd(0, j) = (spec.cost(v, xp, up) - spec.cost(v, xm, um)) / (2.0 * h);
    }
    rep.cost_grad =
        std::max(rep.cost_grad,
                 rel_err(Mat(spec.cost_grad(v, x, u).transpose()), grad_fd));

    Mat hess_fd(nz, nz);
    for (int j = 0; j < nz; ++j) {
      Vec wp = w0, wm = w0;
      wp(j) += h;
      wm(j) -= h;
      auto [xp, up] = split(wp);
      auto [xm, um] = split(wm);
      hess_fd.col(j) =
          (spec.cost_grad(v, xp, up) - spec.cost_grad(v, xm, um)) / (2.0 * h);
    }
    rep.cost_hess =
        std::max(rep.cost_hess, rel_err(spec.cost_hess(v, x, u), hess_fd));

    int nh = spec.dims.n_h_v[static_cast<size_t>(v)];
    if (nh == 0) continue;
    int o = spec.dims.u_offset(v);
    int nv = spec.dims.n_u_v[static_cast<size_t>(v)];
    Vec uv = u.segment(o, nv);
    Mat hj_fd(nh, nv);
    for (int j = 0; j < nv; ++j) {
      Vec up = uv, um = uv;
      up(j) += h;
      um(j) -= h;
      hj_fd.col(j) = (spec.h(v, up) - spec.h(v, um)) / (2.0 * h);
    }
    rep.h_jac = std::max(rep.h_jac, rel_err(spec.h_jac(v, uv), hj_fd));
  }
  return rep;
}

std::pair<Vec, Vec> sample_interior_point(const GameSpec& spec,
                                          std::mt19937& rng, double margin) {
  const int nx = spec.dims.n_x;
  const int nu = spec.dims.n_u();
  const int nz = nx + nu;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int attempt = 0; attempt < 100000; ++attempt) {
    Vec w(nz);
    for (int j = 0; j < nz; ++j)
      w(j) = spec.sample_lo(j) +
             unit(rng) * (spec.sample_hi(j) - spec.sample_lo(j));
    Vec x = w.head(nx), u = w.tail(nu);

    if (spec.dims.n_g > 0 && (spec.g(x, u).array() > -margin).any()) continue;
    bool ok = true;
    for (int v = 0; v < spec.dims.M && ok; ++v) {
      int nh = spec.dims.n_h_v[static_cast<size_t>(v)];
      if (nh > 0) {
        Vec uv = u.segment(spec.dims.u_offset(v),
                           spec.dims.n_u_v[static_cast<size_t>(v)]);
        if ((spec.h(v, uv).array() > -margin).any()) ok = false;
      }
      if (ok) {
        try {
          spec.cost(v, x, u);
        } catch (const DomainError&) {
          ok = false;
        }
      }
    }
    if (ok) return {x, u};
  }
  throw std::runtime_error("sample_interior_point: no strictly feasible point "
                           "found in 100000 attempts");
}

}  // namespace rhg

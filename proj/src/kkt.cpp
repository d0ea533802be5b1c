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

#include "rhg/kkt.hpp"

#include <cassert>
#include <cmath>

namespace rhg {

double fb_phi(double a, double b, double eps) {
  return a + b - std::sqrt(a * a + b * b + eps * eps);
}

std::pair<double, double> fb_dphi(double a, double b, double eps) {
  double s = std::sqrt(a * a + b * b + eps * eps);
  if (s == 0.0) {
    double d = 1.0 - 1.0 / std::sqrt(2.0);
    return {d, d};
  }
  return {1.0 - a / s, std::max(1.0 - b / s, 1e-10)};
}

KktLayout::KktLayout(const GameSpec& spec, int N, Mode mode,
                     std::vector<int> participants, std::vector<Vec> frozen_u)
    : dims_(spec.dims),
      N_(N),
      mode_(mode),
      participants_(std::move(participants)),
      frozen_u_(std::move(frozen_u)) {
  if (N_ < 1) throw std::invalid_argument("horizon must be >= 1");
  if (participants_.empty()) {
    participants_.resize(static_cast<size_t>(dims_.M));
    std::iota(participants_.begin(), participants_.end(), 0);
  }
  if (!frozen_u_.empty() && static_cast<int>(frozen_u_.size()) != N_)
    throw std::invalid_argument("frozen inputs must cover every stage");

  n_x_ = dims_.n_x;
  nu_dec_ = 0;
  for (int v : participants_) nu_dec_ += dims_.n_u_v[static_cast<size_t>(v)];
  const int nP = static_cast<int>(participants_.size());
  n_lg_blocks_ = (mode_ == Mode::Variational) ? 1 : nP;

  off_u_ = (N_ + 1) * n_x_;
  off_mu_ = off_u_ + N_ * nu_dec_;
  off_lg_ = off_mu_ + nP * (N_ + 1) * n_x_;
  off_lh_ = off_lg_ + n_lg_blocks_ * N_ * dims_.n_g;

  lh_starts_.resize(static_cast<size_t>(nP));
  int base = off_lh_;
  for (int pi = 0; pi < nP; ++pi) {
    lh_starts_[static_cast<size_t>(pi)] = base;
    base += N_ * dims_.n_h_v[static_cast<size_t>(participants_[static_cast<size_t>(pi)])];
  }
  n_ = base;
}

int KktLayout::iu_v(int k, int v) const {
  int o = 0;
  for (int w : participants_) {
    if (w == v) return iu(k) + o;
    o += dims_.n_u_v[static_cast<size_t>(w)];
  }
  throw std::logic_error("agent does not participate in this layout");
}

int KktLayout::ilg(int pi, int k) const {
  int b = (mode_ == Mode::Variational) ? 0 : pi;
  return off_lg_ + (b * N_ + k) * dims_.n_g;
}

int KktLayout::ilh(int pi, int k) const {
  return lh_starts_[static_cast<size_t>(pi)] +
         k * dims_.n_h_v[static_cast<size_t>(participants_[static_cast<size_t>(pi)])];
}

Vec KktLayout::joint_u(const Vec& z, int k) const {
  if (frozen_u_.empty()) return z.segment(iu(k), nu_dec_);
  Vec u = frozen_u_[static_cast<size_t>(k)];
  for (int v : participants_) {
    int nv = dims_.n_u_v[static_cast<size_t>(v)];
    u.segment(dims_.u_offset(v), nv) = z.segment(iu_v(k, v), nv);
  }
  return u;
}

void assemble_kkt(const GameSpec& spec, const KktLayout& L, const Vec& x_init,
                  const Vec& z, double eps_fb, Vec& F, Mat* jac) {
  const Dims& d = spec.dims;
  const int N = L.N();
  const int nx = d.n_x;
  const int nu_full = d.n_u();
  const int ng = d.n_g;
  const auto& P = L.participants();
  const int nP = static_cast<int>(P.size());

  F.setZero(L.n());
  if (jac) jac->setZero(L.n(), L.n());

  // Stagewise caches: every evaluator is called once per stage.
  std::vector<Vec> xs(static_cast<size_t>(N + 1));
  for (int k = 0; k <= N; ++k) xs[static_cast<size_t>(k)] = z.segment(L.ix(k), nx);
  std::vector<Vec> us(static_cast<size_t>(N));
  std::vector<Vec> fs(static_cast<size_t>(N)), gs(static_cast<size_t>(N));
  std::vector<Mat> fj(static_cast<size_t>(N)), gj(static_cast<size_t>(N));
  std::vector<std::vector<Vec>> grads(static_cast<size_t>(nP));
  std::vector<std::vector<Mat>> hesss(static_cast<size_t>(nP));
  for (int pi = 0; pi < nP; ++pi) {
    grads[static_cast<size_t>(pi)].resize(static_cast<size_t>(N));
    if (jac) hesss[static_cast<size_t>(pi)].resize(static_cast<size_t>(N));
  }
  for (int k = 0; k < N; ++k) {
    us[static_cast<size_t>(k)] = L.joint_u(z, k);
    const Vec& xk = xs[static_cast<size_t>(k)];
    const Vec& uk = us[static_cast<size_t>(k)];
    fs[static_cast<size_t>(k)] = spec.f(xk, uk);
    fj[static_cast<size_t>(k)] = spec.f_jac(xk, uk);
    if (ng > 0) {
      gs[static_cast<size_t>(k)] = spec.g(xk, uk);
      gj[static_cast<size_t>(k)] = spec.g_jac(xk, uk);
    }
    for (int pi = 0; pi < nP; ++pi) {
      int v = P[static_cast<size_t>(pi)];
      grads[static_cast<size_t>(pi)][static_cast<size_t>(k)] = spec.cost_grad(v, xk, uk);
      if (jac)
        hesss[static_cast<size_t>(pi)][static_cast<size_t>(k)] = spec.cost_hess(v, xk, uk);
    }
  }

  // Scatters a block of d(row)/d(joint u) into the decision-input columns.
  auto add_u_cols = [&](int r, int nrows, int k, const Mat& block) {
    for (int w : P) {
      int o = d.u_offset(w);
      int nw = d.n_u_v[static_cast<size_t>(w)];
      jac->block(r, L.iu_v(k, w), nrows, nw) += block.middleCols(o, nw);
    }
  };

  int r = 0;

  // Stationarity in x_k, one block row per participant and stage (k = N
  // carries the dangling costate and any terminal term).
  for (int pi = 0; pi < nP; ++pi) {
    int v = P[static_cast<size_t>(pi)];
    for (int k = 0; k <= N; ++k) {
      Vec row = Vec::Zero(nx);
      if (k < N) {
        const Mat& fjk = fj[static_cast<size_t>(k)];
        row += grads[static_cast<size_t>(pi)][static_cast<size_t>(k)].head(nx);
        row += fjk.leftCols(nx).transpose() * z.segment(L.imu(pi, k), nx);
        if (ng > 0)
          row += gj[static_cast<size_t>(k)].leftCols(nx).transpose() *
                 z.segment(L.ilg(pi, k), ng);
      }
      if (k > 0) row -= z.segment(L.imu(pi, k - 1), nx);
      if (k == 0) row += z.segment(L.imu(pi, N), nx);
      if (k == N && spec.has_terminal()) row += spec.terminal_lin[static_cast<size_t>(v)];
      F.segment(r, nx) = row;
      if (jac) {
        if (k < N) {
          const Mat& H = hesss[static_cast<size_t>(pi)][static_cast<size_t>(k)];
          jac->block(r, L.ix(k), nx, nx) += H.topLeftCorner(nx, nx);
          add_u_cols(r, nx, k, H.topRightCorner(nx, nu_full));
          jac->block(r, L.imu(pi, k), nx, nx) +=
              fj[static_cast<size_t>(k)].leftCols(nx).transpose();
          if (ng > 0)
            jac->block(r, L.ilg(pi, k), nx, ng) +=
                gj[static_cast<size_t>(k)].leftCols(nx).transpose();
        }
        if (k > 0)
          jac->block(r, L.imu(pi, k - 1), nx, nx) -= Mat::Identity(nx, nx);
        if (k == 0) jac->block(r, L.imu(pi, N), nx, nx) += Mat::Identity(nx, nx);
      }
      r += nx;
    }
  }

  // Stationarity in the participant's own inputs.
  for (int pi = 0; pi < nP; ++pi) {
    int v = P[static_cast<size_t>(pi)];
    int nv = d.n_u_v[static_cast<size_t>(v)];
    int o = d.u_offset(v);
    int nh = d.n_h_v[static_cast<size_t>(v)];
    for (int k = 0; k < N; ++k) {
      Vec row = grads[static_cast<size_t>(pi)][static_cast<size_t>(k)].segment(nx + o, nv);
      row += fj[static_cast<size_t>(k)].middleCols(nx + o, nv).transpose() *
             z.segment(L.imu(pi, k), nx);
      if (ng > 0)
        row += gj[static_cast<size_t>(k)].middleCols(nx + o, nv).transpose() *
               z.segment(L.ilg(pi, k), ng);
      Mat hjk;
      if (nh > 0) {
        hjk = spec.h_jac(v, us[static_cast<size_t>(k)].segment(o, nv));
        row += hjk.transpose() * z.segment(L.ilh(pi, k), nh);
      }
      F.segment(r, nv) = row;
      if (jac) {
        const Mat& H = hesss[static_cast<size_t>(pi)][static_cast<size_t>(k)];
        jac->block(r, L.ix(k), nv, nx) += H.block(nx + o, 0, nv, nx);
        add_u_cols(r, nv, k, H.block(nx + o, nx, nv, nu_full));
        jac->block(r, L.imu(pi, k), nv, nx) +=
            fj[static_cast<size_t>(k)].middleCols(nx + o, nv).transpose();
        if (ng > 0)
          jac->block(r, L.ilg(pi, k), nv, ng) +=
              gj[static_cast<size_t>(k)].middleCols(nx + o, nv).transpose();
        if (nh > 0) jac->block(r, L.ilh(pi, k), nv, nh) += hjk.transpose();
      }
      r += nv;
    }
  }

  // Dynamics defects and the initial-condition anchor, shared across agents.
  for (int k = 0; k < N; ++k) {
    F.segment(r, nx) = fs[static_cast<size_t>(k)] - xs[static_cast<size_t>(k + 1)];
    if (jac) {
      jac->block(r, L.ix(k), nx, nx) += fj[static_cast<size_t>(k)].leftCols(nx);
      add_u_cols(r, nx, k, fj[static_cast<size_t>(k)].rightCols(nu_full));
      jac->block(r, L.ix(k + 1), nx, nx) -= Mat::Identity(nx, nx);
    }
    r += nx;
  }
  F.segment(r, nx) = xs[0] - x_init;
  if (jac) jac->block(r, L.ix(0), nx, nx) += Mat::Identity(nx, nx);
  r += nx;

  // Complementarity rows for the coupled constraints, one block per
  // multiplier set.
  for (int b = 0; b < L.lambda_g_blocks(); ++b) {
    for (int k = 0; k < N; ++k) {
      for (int i = 0; i < ng; ++i) {
        double lam = z(L.ilg(b, k) + i);
        double a = -gs[static_cast<size_t>(k)](i);
        F(r) = fb_phi(a, lam, eps_fb);
        if (jac) {
          auto [da, db] = fb_dphi(a, lam, eps_fb);
          jac->block(r, L.ix(k), 1, nx) -=
              da * gj[static_cast<size_t>(k)].row(i).head(nx);
          add_u_cols(r, 1, k,
                     Mat(-da * gj[static_cast<size_t>(k)].row(i).tail(nu_full)));
          (*jac)(r, L.ilg(b, k) + i) += db;
        }
        ++r;
      }
    }
  }

  // Complementarity rows for each participant's local constraints.
  for (int pi = 0; pi < nP; ++pi) {
    int v = P[static_cast<size_t>(pi)];
    int nh = d.n_h_v[static_cast<size_t>(v)];
    if (nh == 0) continue;
    int nv = d.n_u_v[static_cast<size_t>(v)];
    int o = d.u_offset(v);
    for (int k = 0; k < N; ++k) {
      Vec uv = us[static_cast<size_t>(k)].segment(o, nv);
      Vec hv = spec.h(v, uv);
      Mat hjk = spec.h_jac(v, uv);
      for (int i = 0; i < nh; ++i) {
        double lam = z(L.ilh(pi, k) + i);
        double a = -hv(i);
        F(r) = fb_phi(a, lam, eps_fb);
        if (jac) {
          auto [da, db] = fb_dphi(a, lam, eps_fb);
          jac->block(r, L.iu_v(k, v), 1, nv) -= da * hjk.row(i);
          (*jac)(r, L.ilh(pi, k) + i) += db;
        }
        ++r;
      }
    }
  }

  assert(r == L.n());
}

std::pair<Vec, Mat> assemble_kkt(const GameSpec& spec, const Vec& x_init, int N,
                                 const Vec& z, double eps_fb, Mode mode) {
  KktLayout layout(spec, N, mode);
  Vec F;
  Mat J;
  assemble_kkt(spec, layout, x_init, z, eps_fb, F, &J);
  return {std::move(F), std::move(J)};
}

}  // namespace rhg

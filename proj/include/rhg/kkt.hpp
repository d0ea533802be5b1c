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

#include <optional>

#include "rhg/game.hpp"

namespace rhg {

/// Multiplier structure for coupled constraint rows. NonVariational carries
/// one multiplier block per agent (the default); Variational shares a single
/// block across agents, imposing equal shadow prices.
enum class Mode : std::uint8_t { NonVariational, Variational };

/// Regularized Fischer-Burmeister function phi(a, b) = a + b -
/// sqrt(a^2 + b^2 + eps^2). With a = -c and b = lambda it vanishes (at
/// eps = 0) exactly when c <= 0, lambda >= 0, c lambda = 0.
double fb_phi(double a, double b, double eps);

/// Generalized derivative (d phi/da, d phi/db). The db entry is floored at
/// 1e-10: on rows where b >> max(|a|, eps) the exact value eps^2/(2 b^2)
/// underflows and can make the Newton matrix exactly singular (degenerate
/// multiplier rows); the floor keeps it invertible without touching the
/// residual.
std::pair<double, double> fb_dphi(double a, double b, double eps);

/// Index layout of the stacked KKT unknowns for a horizon-N problem.
///
/// Unknowns, in order:
///   x_0..x_N                          (N+1) n_x
///   u_0..u_{N-1}                      N * (decision input dims), step-major
///   mu^p for each participant p       (N+1) n_x each; block k=N is the
///                                     initial-condition row multiplier
///   lambda_g blocks                   N n_g per block (one per participant,
///                                     or a single shared block in
///                                     Variational mode)
///   lambda_h^p for each participant   N n_h_p
///
/// Equations follow the same count: per-participant stationarity in x and in
/// the participant's inputs, shared dynamics + initial condition rows (once),
/// then one Fischer-Burmeister row per inequality row and stage.
///
/// `participants` selects which agents' decisions are free; the remaining
/// agents' inputs are read from `frozen_u` (the best-response subproblem).
/// The default (all agents, nothing frozen) is the full equilibrium system.
class KktLayout {
 public:
  KktLayout(const GameSpec& spec, int N, Mode mode = Mode::NonVariational,
            std::vector<int> participants = {},
            std::vector<Vec> frozen_u = {});

  int n() const { return n_; }
  int N() const { return N_; }
  Mode mode() const { return mode_; }
  const std::vector<int>& participants() const { return participants_; }
  bool has_frozen() const { return !frozen_u_.empty(); }
  int lambda_g_blocks() const { return n_lg_blocks_; }

  int ix(int k) const { return k * n_x_; }
  int iu(int k) const { return off_u_ + k * nu_dec_; }
  /// Start of participant v's decision slice at step k; v must participate.
  int iu_v(int k, int v) const;
  int imu(int pi, int k) const { return off_mu_ + (pi * (N_ + 1) + k) * n_x_; }
  int ilg(int pi, int k) const;
  int ilh(int pi, int k) const;

  int n_x() const { return n_x_; }
  int nu_dec() const { return nu_dec_; }

  /// Assembles the full joint input at step k from decision variables and
  /// frozen values.
  Vec joint_u(const Vec& z, int k) const;

 private:
  Dims dims_;
  int N_;
  Mode mode_;
  std::vector<int> participants_;
  std::vector<Vec> frozen_u_;
  int n_x_, nu_dec_, n_lg_blocks_;
  int off_u_, off_mu_, off_lg_, off_lh_;
  int n_;
  std::vector<int> lh_starts_;  // per participant, offset of lambda_h block
};

/// Assembles the stacked KKT residual (and generalized Jacobian when `jac`
/// is non-null) at iterate z for initial condition x_init and smoothing
/// eps_fb. Evaluator domain errors propagate. The residual reads the spec's
/// terminal_lin term in the x_N stationarity rows.
void assemble_kkt(const GameSpec& spec, const KktLayout& layout,
                  const Vec& x_init, const Vec& z, double eps_fb, Vec& F,
                  Mat* jac);

/// Convenience overload: default full-equilibrium layout, residual and
/// Jacobian returned by value.
std::pair<Vec, Mat> assemble_kkt(const GameSpec& spec, const Vec& x_init,
                                 int N, const Vec& z, double eps_fb,
                                 Mode mode = Mode::NonVariational);

}  // namespace rhg

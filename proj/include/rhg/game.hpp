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

#include <Eigen/Dense>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Problem dimensions of one dynamic game.
struct Dims {
  int M = 0;                 ///< number of agents
  int n_x = 0;               ///< state dimension
  std::vector<int> n_u_v;    ///< per-agent input dimensions, length M
  int n_g = 0;               ///< coupled inequality rows g(x,u) <= 0
  std::vector<int> n_h_v;    ///< per-agent local inequality rows h^v(u^v) <= 0

  /// Total input dimension.
  int n_u() const { return std::accumulate(n_u_v.begin(), n_u_v.end(), 0); }

  /// Start of agent v's slice inside the joint input vector.
  int u_offset(int v) const {
    return std::accumulate(n_u_v.begin(), n_u_v.begin() + v, 0);
  }

  int n_h_total() const { return std::accumulate(n_h_v.begin(), n_h_v.end(), 0); }
};

/// Thrown by evaluators when a point leaves the cost's domain of definition
/// (e.g. a nonpositive logarithm argument). Carries the offending point so
/// callers can report it; the solver's line search catches and rejects.
class DomainError : public std::runtime_error {
 public:
  DomainError(const std::string& what, Vec x, Vec u, int agent = -1)
      : std::runtime_error(what), x_(std::move(x)), u_(std::move(u)), agent_(agent) {}

  const Vec& x() const { return x_; }
  const Vec& u() const { return u_; }
  int agent() const { return agent_; }

 private:
  Vec x_, u_;
  int agent_;
};

/// Full description of one dynamic game: dynamics, per-agent stage costs,
/// coupled constraints g(x,u) <= 0, local constraints h^v(u^v) <= 0, all with
/// exact derivative evaluators. Evaluators are pure functions; a GameSpec is
/// immutable after construction and safe to share across solver instances.
///
/// Derivative layout: gradients and Jacobians are taken over the stacked
/// vector (x, u) of size n_x + n_u unless noted otherwise.
struct GameSpec {
  Dims dims;
  std::string name;

  /// Dynamics x+ = f(x, u).
  std::function<Vec(const Vec&, const Vec&)> f;
  /// Jacobian [df/dx | df/du], n_x by (n_x + n_u).
  std::function<Mat(const Vec&, const Vec&)> f_jac;

  /// Stage cost of agent v.
  std::function<double(int, const Vec&, const Vec&)> cost;
  /// Gradient of agent v's stage cost over stacked (x, u).
  std::function<Vec(int, const Vec&, const Vec&)> cost_grad;
  /// Hessian of agent v's stage cost over stacked (x, u).
  std::function<Mat(int, const Vec&, const Vec&)> cost_hess;

  /// Coupled rows g(x, u) <= 0; empty allowed (n_g = 0).
  std::function<Vec(const Vec&, const Vec&)> g;
  /// Jacobian of g, n_g by (n_x + n_u).
  std::function<Mat(const Vec&, const Vec&)> g_jac;

  /// Local rows h^v(u^v) <= 0 of agent v; receives agent v's input slice.
  std::function<Vec(int, const Vec&)> h;
  /// Jacobian of h^v, n_h_v by n_u_v.
  std::function<Mat(int, const Vec&)> h_jac;

  /// Per-agent linear terminal cost term: agent v pays terminal_lin[v] . x_N.
  /// Empty when the game has no terminal term.
  std::vector<Vec> terminal_lin;

  /// When set, diagnostics shift stage costs so the steady-state stage cost
  /// is zero. The solver never applies the shift (the equilibrium set is
  /// unchanged by a constant offset).
  bool offset_mode = false;

  /// Deterministic interior cold-start joint input.
  Vec cold_u;
  /// Deterministic cold-start state for steady-state solves.
  Vec cold_x;
  /// Default initial state of the benchmark.
  Vec default_x0;

  /// Sampling box over stacked (x, u) for derivative checks; points are
  /// drawn uniformly and rejected unless strictly feasible (g < 0, h < 0)
  /// and inside the cost domain.
  Vec sample_lo, sample_hi;

  /// Stage cost of agent v including nothing but the stage term; terminal
  /// term accessor for trajectory cost accumulation.
  double terminal_cost(int v, const Vec& x_terminal) const {
    if (terminal_lin.empty()) return 0.0;
    return terminal_lin[static_cast<size_t>(v)].dot(x_terminal);
  }

  bool has_terminal() const { return !terminal_lin.empty(); }
};

}  // namespace rhg

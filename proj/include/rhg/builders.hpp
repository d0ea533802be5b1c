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

#include <array>
#include <cstdint>
#include <random>

#include "rhg/game.hpp"

namespace rhg {

/// Parameters of the scalar-state linear-quadratic game with coupled input
/// and state boxes. Two agents share the state x+ = A x + B1 u1 + B2 u2;
/// agent v pays u^v sum_j R[v][j] u^j + Q[v] (x - x_ref)^2.
struct LqCoupledParams {
  double A = 1.5;
  double B1 = 1.0;
  double B2 = 2.0;
  std::array<std::array<double, 2>, 2> R{{{4.0, 4.0}, {5.0, 5.0}}};
  std::array<double, 2> Q{1.0, 2.0};
  double x_ref = 0.3;
  double input_box = 2.0;      ///< |u^v| <= input_box (local rows)
  double aggregate_box = 2.0;  ///< |u1 + u2| <= aggregate_box (coupled rows)
  double state_box = 1.0;      ///< |x| <= state_box (coupled rows)
  double x0_default = 1.0;
};

/// Parameters of the two-agent economic growth game. Each agent owns a local
/// capital state x^v with shift dynamics x^v+ = u^v and pays
/// -ln(q^v (x^v)^alpha^v - r^v u^v (u1 + u2)).
struct EconGrowthParams {
  std::array<double, 2> q{5.0, 4.0};
  std::array<double, 2> r{1.0, 1.5};
  std::array<double, 2> alpha{0.3, 0.2};
  double aggregate_lo = 0.1;  ///< u1 + u2 >= aggregate_lo (coupled)
  double aggregate_hi = 5.0;  ///< u1 + u2 <= aggregate_hi (coupled)
  double state_hi = 10.0;     ///< 0 <= x^v <= state_hi (coupled)
  std::array<double, 2> x0_default{1.0, 1.0};
};

/// Builds the linear-quadratic benchmark. Throws std::invalid_argument
/// naming the offending field on invalid parameters.
GameSpec build_lq_coupled(const LqCoupledParams& params = {});

/// Builds the economic growth benchmark. Throws std::invalid_argument naming
/// the offending field on invalid parameters. Cost evaluators throw
/// DomainError when the logarithm argument is nonpositive.
GameSpec build_econ_growth(const EconGrowthParams& params = {});

/// Per-evaluator maximum relative error of analytic derivatives against
/// central finite differences.
struct DerivCheckReport {
  double f_jac = 0;
  double cost_grad = 0;
  double cost_hess = 0;
  double g_jac = 0;
  double h_jac = 0;

  double max_error() const;
};

/// Compares all analytic derivatives of `spec` against central finite
/// differences with step `h` at one point. The point must be strictly
/// feasible and inside the cost domain; otherwise a DomainError propagates.
DerivCheckReport check_derivatives(const GameSpec& spec, const Vec& x,
                                   const Vec& u, double h = 1e-6);

/// Draws a strictly feasible interior point (g < -margin, h < -margin, cost
/// domain valid) from the spec's sampling box by rejection. Deterministic
/// given the generator state. Throws std::runtime_error after 100000 failed
/// attempts.
std::pair<Vec, Vec> sample_interior_point(const GameSpec& spec,
                                          std::mt19937& rng,
                                          double margin = 1e-6);

}  // namespace rhg

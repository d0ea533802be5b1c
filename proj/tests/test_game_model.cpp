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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rhg/builders.hpp"

using namespace rhg;
using doctest::Approx;

namespace {

Vec vec1(double a) { return Vec::Constant(1, a); }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("dimension bookkeeping") {
  Dims d;
  d.M = 2;
  d.n_x = 1;
  d.n_u_v = {1, 3};
  d.n_g = 4;
  d.n_h_v = {2, 0};
  CHECK(d.n_u() == 4);
  CHECK(d.u_offset(0) == 0);
  CHECK(d.u_offset(1) == 1);
  CHECK(d.n_h_total() == 2);
}

TEST_CASE("quadratic benchmark construction") {
  GameSpec s = build_lq_coupled();
  CHECK(s.dims.M == 2);
  CHECK(s.dims.n_x == 1);
  CHECK(s.dims.n_u() == 2);
  CHECK(s.dims.n_g == 4);
  CHECK(s.dims.n_h_total() == 4);
  CHECK(s.name == "lq_coupled");

  // x+ = 1.5 x with zero input
  CHECK(s.f(vec1(1.0), vec2(0, 0))(0) == Approx(1.5).epsilon(1e-15));
  // agent 1 pays nothing at the reference with zero input
  CHECK(s.cost(0, vec1(0.3), vec2(0, 0)) == Approx(0.0).epsilon(1e-15));
  // agent 2 still pays its state deviation elsewhere
  CHECK(s.cost(1, vec1(0.0), vec2(0, 0)) == Approx(2.0 * 0.09).epsilon(1e-12));

  CHECK(s.default_x0(0) == 1.0);
  CHECK(s.cold_u.size() == 2);
  CHECK_FALSE(s.has_terminal());
  CHECK(s.terminal_cost(0, vec1(5.0)) == 0.0);
}

TEST_CASE("quadratic stage costs scale quadratically in the input") {
  GameSpec s = build_lq_coupled();
  // cost(x, u) = u-quadratic + Q (x - x_ref)^2, so scaling u by 2 multiplies
  // the input part by exactly 4 and leaves the state part unchanged.
  const Vec x = vec1(0.7);
  for (int v = 0; v < 2; ++v) {
    for (double a : {-1.3, 0.2, 0.9}) {
      Vec u = vec2(a, -0.5 * a);
      double state_part = s.cost(v, x, vec2(0, 0));
      double quad_part = s.cost(v, x, u) - state_part;
      CHECK(s.cost(v, x, 2 * u) - 4 * quad_part == Approx(state_part).epsilon(1e-14));
    }
  }
}

TEST_CASE("growth benchmark construction") {
  GameSpec s = build_econ_growth();
  CHECK(s.dims.M == 2);
  CHECK(s.dims.n_x == 2);
  CHECK(s.dims.n_u() == 2);
  CHECK(s.dims.n_h_total() == 0);
  CHECK(s.name == "econ_growth");

  // shift dynamics: the next state is the input, for any input
  CHECK((s.f(vec2(1, 1), vec2(0.5, 0.7)) - vec2(0.5, 0.7)).norm() == 0.0);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> un(0.1, 2.0);
  for (int i = 0; i < 10; ++i) {
    Vec u = vec2(un(rng), un(rng));
    CHECK((s.f(vec2(un(rng), un(rng)), u) - u).norm() == 0.0);
  }

  // zero input: agent 1 consumes its full output q^1 * 1^alpha = 5
  CHECK(s.cost(0, vec2(1, 1), vec2(0, 0)) == Approx(-std::log(5.0)).epsilon(1e-15));
  CHECK(s.cost(1, vec2(1, 1), vec2(0, 0)) == Approx(-std::log(4.0)).epsilon(1e-15));
  CHECK(s.default_x0(0) == 1.0);
  CHECK(s.default_x0(1) == 1.0);
}

TEST_CASE("growth costs guard their logarithm domain") {
  GameSpec s = build_econ_growth();

  SUBCASE("nonpositive capital") {
    Vec x = vec2(0.0, 1.0);
    Vec u = vec2(0.1, 0.1);
    CHECK_THROWS_AS(s.cost(0, x, u), DomainError);
    try {
      s.cost(0, x, u);
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("capital") != std::string::npos);
      CHECK(e.agent() == 0);
      CHECK(e.x()(0) == 0.0);
      CHECK(e.u()(0) == 0.1);
    }
  }

  SUBCASE("investment exceeding output") {
    // q^2 x^alpha = 4 at x = (1,1); r^2 u^2 (u1+u2) = 1.5*2*4 = 12 > 4
    Vec x = vec2(1.0, 1.0);
    Vec u = vec2(2.0, 2.0);
    CHECK_THROWS_AS(s.cost(1, x, u), DomainError);
    try {
      s.cost(1, x, u);
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("consumption") != std::string::npos);
      CHECK(e.agent() == 1);
    }
  }

  SUBCASE("gradients guard the same domain") {
    CHECK_THROWS_AS(s.cost_grad(0, vec2(-1.0, 1.0), vec2(0.1, 0.1)), DomainError);
    CHECK_THROWS_AS(s.cost_hess(0, vec2(-1.0, 1.0), vec2(0.1, 0.1)), DomainError);
  }
}

TEST_CASE("construction rejects invalid parameters by name") {
  SUBCASE("quadratic family") {
    LqCoupledParams p;
    p.input_box = 0.0;
    CHECK_THROWS_WITH_AS(build_lq_coupled(p), "input_box: must be positive",
                         std::invalid_argument);
    p = {};
    p.state_box = -1.0;
    CHECK_THROWS_WITH_AS(build_lq_coupled(p), "state_box: must be positive",
                         std::invalid_argument);
    p = {};
    p.R[0][0] = 0.0;
    CHECK_THROWS_WITH_AS(build_lq_coupled(p), "R: diagonal must be positive",
                         std::invalid_argument);
    p = {};
    p.Q[1] = -0.1;
    CHECK_THROWS_WITH_AS(build_lq_coupled(p), "Q: must be nonnegative",
                         std::invalid_argument);
  }

  SUBCASE("growth family") {
    EconGrowthParams p;
    p.q[0] = 0.0;
    CHECK_THROWS_WITH_AS(build_econ_growth(p), "q: must be positive",
                         std::invalid_argument);
    p = {};
    p.alpha[1] = 1.0;
    CHECK_THROWS_AS(build_econ_growth(p), std::invalid_argument);
    p = {};
    p.aggregate_hi = 0.05;  // below aggregate_lo
    CHECK_THROWS_AS(build_econ_growth(p), std::invalid_argument);
  }
}

TEST_CASE("analytic derivatives agree with central differences") {
  SUBCASE("quadratic family at a fixed point") {
    GameSpec s = build_lq_coupled();
    DerivCheckReport r = check_derivatives(s, vec1(0.2), vec2(0.1, -0.1), 1e-6);
    CHECK(r.max_error() <= 1e-6);
  }

  SUBCASE("growth family at a fixed point") {
    GameSpec s = build_econ_growth();
    DerivCheckReport r = check_derivatives(s, vec2(1, 1), vec2(0.5, 0.5), 1e-6);
    CHECK(r.max_error() <= 1e-5);
  }

  SUBCASE("hundred random interior points per family") {
    for (const GameSpec& s : {build_lq_coupled(), build_econ_growth()}) {
      std::mt19937 rng(1234);
      double worst = 0;
      for (int i = 0; i < 100; ++i) {
        auto [x, u] = sample_interior_point(s, rng);
        worst = std::max(worst, check_derivatives(s, x, u).max_error());
      }
      INFO("family ", s.name, " worst relative error ", worst);
      CHECK(worst <= 1e-5);
    }
  }
}

TEST_CASE("a corrupted Jacobian is detected") {
  GameSpec s = build_lq_coupled();
  GameSpec broken = s;
  auto good = s.f_jac;
  broken.f_jac = [good](const Vec& x, const Vec& u) {
    Mat J = good(x, u);
    J(0, 0) += 1e-2;
    return J;
  };
  DerivCheckReport r = check_derivatives(broken, vec1(0.2), vec2(0.1, -0.1), 1e-6);
  CHECK(r.f_jac >= 1e-3);
}

TEST_CASE("interior sampling is feasible and deterministic") {
  for (const GameSpec& s : {build_lq_coupled(), build_econ_growth()}) {
    std::mt19937 a(99), b(99);
    auto [xa, ua] = sample_interior_point(s, a, 1e-3);
    auto [xb, ub] = sample_interior_point(s, b, 1e-3);
    CHECK((xa - xb).norm() == 0.0);
    CHECK((ua - ub).norm() == 0.0);

    CHECK(s.g(xa, ua).maxCoeff() < -1e-3);
    for (int v = 0; v < s.dims.M; ++v) {
      Vec uv = ua.segment(s.dims.u_offset(v), s.dims.n_u_v[static_cast<size_t>(v)]);
      Vec hv = s.h(v, uv);
      if (hv.size() > 0) CHECK(hv.maxCoeff() < -1e-3);
    }
    // the cost must be evaluable at the sample
    for (int v = 0; v < s.dims.M; ++v) CHECK_NOTHROW(s.cost(v, xa, ua));
  }
}

TEST_CASE("evaluators are pure") {
  GameSpec s = build_econ_growth();
  Vec x = vec2(0.8, 0.9), u = vec2(0.3, 0.2);
  double c1 = s.cost(0, x, u);
  Vec g1 = s.cost_grad(0, x, u);
  Mat h1 = s.cost_hess(0, x, u);
  for (int i = 0; i < 3; ++i) {
    CHECK(s.cost(0, x, u) == c1);
    CHECK((s.cost_grad(0, x, u) - g1).norm() == 0.0);
    CHECK((s.cost_hess(0, x, u) - h1).norm() == 0.0);
  }
}

TEST_CASE("terminal term accessor") {
  GameSpec s = build_lq_coupled();
  s.terminal_lin = {vec1(2.0), vec1(-1.0)};
  CHECK(s.has_terminal());
  CHECK(s.terminal_cost(0, vec1(3.0)) == Approx(6.0).epsilon(1e-15));
  CHECK(s.terminal_cost(1, vec1(3.0)) == Approx(-3.0).epsilon(1e-15));
}

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
#include <vector>

#include "rhg/builders.hpp"
#include "rhg/steady_state.hpp"

using namespace rhg;
using doctest::Approx;

namespace {

Vec vec1(double a) { return Vec::Constant(1, a); }

// Central finite differences of the stacked residual in z.
Mat fd_jacobian(const GameSpec& spec, const KktLayout& L, const Vec& x_init,
                const Vec& z, double eps_fb, double h) {
  Mat J(L.n(), L.n());
  Vec fp, fm;
  for (int j = 0; j < L.n(); ++j) {
    Vec zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    assemble_kkt(spec, L, x_init, zp, eps_fb, fp, nullptr);
    assemble_kkt(spec, L, x_init, zm, eps_fb, fm, nullptr);
    J.col(j) = (fp - fm) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("smoothed complementarity function") {
  SUBCASE("origin value equals minus the smoothing") {
    for (double eps : {1e-2, 1e-4, 1e-8}) CHECK(fb_phi(0, 0, eps) == -eps);
  }

  SUBCASE("symmetric in its arguments") {
    for (double a : {-0.3, 0.0, 1.7})
      for (double b : {-1.0, 0.2, 2.5})
        CHECK(fb_phi(a, b, 1e-3) == fb_phi(b, a, 1e-3));
  }

  SUBCASE("exact roots at zero smoothing") {
    // phi(a, b) = 0 at eps = 0 exactly on the complementarity set
    CHECK(fb_phi(0.7, 0.0, 0.0) == Approx(0.0).epsilon(1e-15));
    CHECK(fb_phi(0.0, 1.3, 0.0) == Approx(0.0).epsilon(1e-15));
    // violated complementarity has a strictly negative value
    CHECK(fb_phi(-0.5, 0.0, 0.0) < -0.9);
    CHECK(fb_phi(0.4, -0.2, 0.0) < -0.2);
    // both positive: residual is positive (constraint slack times multiplier)
    CHECK(fb_phi(1.0, 1.0, 0.0) > 0.5);
  }

  SUBCASE("inactive row magnitude is bounded by the smoothing") {
    // a = -c > 0 with zero multiplier: |phi| = sqrt(a^2+eps^2) - a <= eps
    for (double a : {1e-3, 0.1, 2.0})
      for (double eps : {1e-2, 1e-6}) {
        double phi = fb_phi(a, 0.0, eps);
        CHECK(phi <= 0.0);
        CHECK(std::abs(phi) <= eps);
      }
  }
}

TEST_CASE("complementarity derivative") {
  SUBCASE("matches finite differences at generic points") {
    for (double a : {-0.7, 0.2, 1.1})
      for (double b : {-0.4, 0.5, 3.0}) {
        const double eps = 1e-3, h = 1e-7;
        auto [da, db] = fb_dphi(a, b, eps);
        double fa = (fb_phi(a + h, b, eps) - fb_phi(a - h, b, eps)) / (2 * h);
        double fb = (fb_phi(a, b + h, eps) - fb_phi(a, b - h, eps)) / (2 * h);
        CHECK(da == Approx(fa).epsilon(1e-6));
        CHECK(db == Approx(fb).epsilon(1e-6));
      }
  }

  SUBCASE("smoothed origin has full derivative") {
    auto [da, db] = fb_dphi(0, 0, 1e-4);
    CHECK(da == Approx(1.0).epsilon(1e-12));
    CHECK(db == Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("diagonal point at zero smoothing") {
    auto [da, db] = fb_dphi(1.0, 1.0, 0.0);
    CHECK(da == Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(db == Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }

  SUBCASE("multiplier column is floored on degenerate rows") {
    // With b >> eps the exact entry eps^2/(2 b^2) underflows; the Jacobian
    // keeps an invertible pivot while the residual stays exact.
    auto [da, db] = fb_dphi(0.0, 1e8, 1e-8);
    CHECK(db == 1e-10);
    CHECK(da == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("unknown layout tiles the stacked vector exactly") {
  GameSpec lq = build_lq_coupled();

  auto audit = [](const GameSpec& spec, int N, Mode mode) {
    KktLayout L(spec, N, mode);
    const Dims& d = spec.dims;
    std::vector<int> hits(static_cast<size_t>(L.n()), 0);
    auto mark = [&](int start, int len) {
      for (int i = start; i < start + len; ++i) hits[static_cast<size_t>(i)]++;
    };
    for (int k = 0; k <= N; ++k) mark(L.ix(k), d.n_x);
    for (int k = 0; k < N; ++k) mark(L.iu(k), L.nu_dec());
    for (int pi = 0; pi < d.M; ++pi)
      for (int k = 0; k <= N; ++k) mark(L.imu(pi, k), d.n_x);
    for (int b = 0; b < L.lambda_g_blocks(); ++b)
      for (int k = 0; k < N; ++k) mark(L.ilg(b, k), d.n_g);
    for (int pi = 0; pi < d.M; ++pi) {
      int nh = d.n_h_v[static_cast<size_t>(pi)];
      for (int k = 0; k < N && nh > 0; ++k) mark(L.ilh(pi, k), nh);
    }
    for (int h : hits) CHECK(h == 1);
    return L.n();
  };

  SUBCASE("per-agent multiplier blocks") {
    // N=3, n_x=1, n_u=2, n_g=4, n_h=2+2:
    // 4 + 6 + 2*4 + 2*12 + 2*6 = 54
    CHECK(audit(lq, 3, Mode::NonVariational) == 54);
  }

  SUBCASE("shared multiplier block in variational mode") {
    KktLayout L(lq, 3, Mode::Variational);
    CHECK(L.lambda_g_blocks() == 1);
    CHECK(audit(lq, 3, Mode::Variational) == 42);
  }

  SUBCASE("family without local rows") {
    GameSpec econ = build_econ_growth();
    audit(econ, 2, Mode::NonVariational);
  }
}

TEST_CASE("layout rejects an empty horizon") {
  GameSpec lq = build_lq_coupled();
  CHECK_THROWS_WITH_AS(KktLayout(lq, 0), "horizon must be >= 1",
                       std::invalid_argument);
}

TEST_CASE("best-response layout freezes the opponents") {
  GameSpec lq = build_lq_coupled();
  const int N = 3;
  std::vector<Vec> frozen;
  for (int k = 0; k < N; ++k) {
    Vec u(2);
    u << 0.1 * k, -0.2 * k;
    frozen.push_back(u);
  }
  KktLayout L(lq, N, Mode::NonVariational, {0}, frozen);
  CHECK(L.nu_dec() == 1);
  CHECK(L.participants() == std::vector<int>{0});
  CHECK(L.has_frozen());

  Vec z = Vec::Zero(L.n());
  for (int k = 0; k < N; ++k) z(L.iu_v(k, 0)) = 7.0 + k;
  for (int k = 0; k < N; ++k) {
    Vec u = L.joint_u(z, k);
    CHECK(u(0) == 7.0 + k);          // decision slice
    CHECK(u(1) == -0.2 * k);         // frozen opponent slice
  }
  CHECK_THROWS_AS(L.iu_v(0, 1), std::logic_error);
}

TEST_CASE("residual Jacobian matches finite differences") {
  SUBCASE("quadratic family") {
    GameSpec lq = build_lq_coupled();
    KktLayout L(lq, 3);
    Vec z(L.n());
    for (int i = 0; i < L.n(); ++i) z(i) = 0.05 + 0.013 * i - 0.002 * i * (i % 3);
    Vec F;
    Mat J;
    assemble_kkt(lq, L, vec1(0.4), z, 1e-6, F, &J);
    Mat Jfd = fd_jacobian(lq, L, vec1(0.4), z, 1e-6, 1e-6);
    double scale = std::max(1.0, Jfd.cwiseAbs().maxCoeff());
    CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale <= 1e-4);
  }

  SUBCASE("growth family stays inside the cost domain") {
    GameSpec econ = build_econ_growth();
    KktLayout L(econ, 2);
    const Dims& d = econ.dims;
    Vec z = Vec::Constant(L.n(), 0.1);
    for (int k = 0; k <= 2; ++k) z.segment(L.ix(k), d.n_x) = Vec::Constant(2, 1.0);
    for (int k = 0; k < 2; ++k) z.segment(L.iu(k), 2) = Vec::Constant(2, 0.5);
    Vec F;
    Mat J;
    assemble_kkt(econ, L, Vec::Constant(2, 1.0), z, 1e-6, F, &J);
    Mat Jfd = fd_jacobian(econ, L, Vec::Constant(2, 1.0), z, 1e-6, 1e-6);
    double scale = std::max(1.0, Jfd.cwiseAbs().maxCoeff());
    CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale <= 1e-4);
  }
}

TEST_CASE("steady state lifts to a one-step stationary point") {
  // With the linear end penalty attached, the steady-state multipliers embed
  // into the horizon-1 system: the dynamics row carries +lambda_s and the
  // initial-condition row -lambda_s per agent.
  GameSpec lq = build_lq_coupled();
  SteadyStateGne ss = solve_steady_state(lq);
  REQUIRE(ss.converged);
  GameSpec pen = terminal_penalty(lq, ss);
  KktLayout L(pen, 1);

  Vec z = Vec::Zero(L.n());
  z.segment(L.ix(0), 1) = ss.x_s;
  z.segment(L.ix(1), 1) = ss.x_s;
  z.segment(L.iu(0), 2) = ss.u_s;
  for (int pi = 0; pi < 2; ++pi) {
    z.segment(L.imu(pi, 0), 1) = ss.lambda_s[static_cast<size_t>(pi)];
    z.segment(L.imu(pi, 1), 1) = -ss.lambda_s[static_cast<size_t>(pi)];
    z.segment(L.ilg(pi, 0), 4) = ss.mult_g[static_cast<size_t>(pi)];
    z.segment(L.ilh(pi, 0), 2) = ss.mult_h[static_cast<size_t>(pi)];
  }
  Vec F;
  assemble_kkt(pen, L, ss.x_s, z, 0.0, F, nullptr);
  CHECK(F.lpNorm<Eigen::Infinity>() <= 1e-12);

  // flipping the initial-condition multiplier sign breaks stationarity
  Vec zbad = z;
  for (int pi = 0; pi < 2; ++pi)
    zbad.segment(L.imu(pi, 1), 1) = ss.lambda_s[static_cast<size_t>(pi)];
  assemble_kkt(pen, L, ss.x_s, zbad, 0.0, F, nullptr);
  CHECK(F.lpNorm<Eigen::Infinity>() > 0.1);
}

TEST_CASE("convenience overload returns the same system") {
  GameSpec lq = build_lq_coupled();
  KktLayout L(lq, 2);
  Vec z = Vec::Constant(L.n(), 0.2);
  Vec F1;
  Mat J1;
  assemble_kkt(lq, L, vec1(0.5), z, 1e-4, F1, &J1);
  auto [F2, J2] = assemble_kkt(lq, vec1(0.5), 2, z, 1e-4);
  CHECK((F1 - F2).norm() == 0.0);
  CHECK((J1 - J2).norm() == 0.0);
}

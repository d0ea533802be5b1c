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

// End-to-end acceptance battery. Each numbered criterion prints one
// [PASS]/[FAIL] line with the measured quantities; the process exit code is
// the number of failed criteria. The battery is self-contained: it solves
// every benchmark instance it judges.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rhg/cli_io.hpp"
#include "rhg/rhg_sim.hpp"

using namespace rhg;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Running maximum of the KKT residual across every converged solve the
// battery performs, judged by criterion 9.
double g_max_residual = 0.0;

void note_residual(bool converged, double residual) {
  if (converged && residual > g_max_residual) g_max_residual = residual;
}

Vec vec1(double a) { return Vec::Constant(1, a); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct StoredRun {
  const GameSpec* spec;
  const SteadyStateGne* ss;
  ClosedLoopRun run;
  std::string label;
};

}  // namespace

int main() {
  GameSpec lq = build_lq_coupled();
  GameSpec econ = build_econ_growth();
  const Vec econ_x0 = Vec::Constant(2, 1.0);

  SteadyStateGne ss_lq = solve_steady_state(lq);
  SteadyStateGne ss_econ = solve_steady_state(econ);
  note_residual(ss_lq.converged, ss_lq.kkt_residual);
  note_residual(ss_econ.converged, ss_econ.kkt_residual);
  if (!ss_lq.converged || !ss_econ.converged) {
    std::printf("[FAIL] setup: steady states did not converge\n");
    return 9;
  }

  const double lq_x0s[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  const int lq_Ns[] = {4, 8, 12};
  const int econ_Ns[] = {8, 12};

  // ---------------------------------------------------------------- 1
  // Certified equilibria on the full benchmark battery, under 60 s.
  std::vector<GnepSolution> lq_family;  // reused by criteria 7 and 8
  std::vector<GnepSolution> econ_family;
  {
    auto t0 = std::chrono::steady_clock::now();
    int total = 0, certified = 0;
    double worst_gap = 0.0;
    auto judge = [&](const GameSpec& spec, const GnepSolution& sol) {
      ++total;
      note_residual(sol.converged, sol.kkt_residual);
      if (!sol.converged) return;
      VerifyReport rep = verify_gne(spec, sol);
      bool ok = rep.certified;
      for (int v = 0; v < spec.dims.M; ++v) {
        double rel = rep.gap(v) / (1.0 + std::abs(rep.j_candidate(v)));
        worst_gap = std::max(worst_gap, rel);
        ok = ok && rel <= 1e-6;
      }
      if (ok) ++certified;
    };
    for (double x0 : lq_x0s)
      for (int N : lq_Ns) {
        lq_family.push_back(solve_gnep(lq, vec1(x0), N));
        judge(lq, lq_family.back());
      }
    for (int N : econ_Ns) {
      econ_family.push_back(solve_gnep(econ, econ_x0, N));
      judge(econ, econ_family.back());
    }
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    bool pass = certified == total && total == 17 && secs < 60.0;
    report(1, pass,
           std::to_string(certified) + "/" + std::to_string(total) +
               " equilibria certified, worst relative gap " + fmt(worst_gap) +
               ", " + fmt(secs) + " s (limit 60)");
  }

  // ---------------------------------------------------------------- 2
  // Open-loop anatomy at (x0 = 1, N = 8): long middle dwell, a leaving
  // arc without the terminal penalty, no leaving arc with it.
  {
    const GnepSolution& sol = lq_family[4 * 3 + 1];  // x0 = 1, N = 8
    Vec sp(3);
    sp << ss_lq.x_s, ss_lq.u_s;
    double eps = 0.05 * (1.0 + sp.norm());
    TurnpikeReport rep = turnpike_count(sol.pair, ss_lq, eps);
    bool dwell_ok = rep.count >= 8 - 6;
    bool leaves = rep.end_state_dist > eps;

    GameSpec pen = terminal_penalty(lq, ss_lq);
    GnepSolution psol = solve_gnep(pen, vec1(1.0), 8);
    note_residual(psol.converged, psol.kkt_residual);
    double pen_gap = (psol.pair.x[8] - ss_lq.x_s).norm();
    bool pen_ok = psol.converged && pen_gap <= 1e-3;

    report(2, dwell_ok && leaves && pen_ok,
           "dwell " + std::to_string(rep.count) + " >= 2 at eps " + fmt(eps) +
               "; leaving arc " + fmt(rep.end_state_dist) + " > eps; " +
               "penalized end gap " + fmt(pen_gap) +
               (pen_ok ? " <= 1e-3" : " exceeds 1e-3"));
  }

  // ---------------------------------------------------------------- 3, 4
  // Horizon sweep: strict geometric decay without the penalty, flat at
  // solver precision with it.
  {
    RunOptions base;
    base.T = 20;
    std::vector<int> Ns;
    for (int n = 4; n <= 14; ++n) Ns.push_back(n);
    std::vector<SweepRow> rows =
        convergence_sweep(lq, vec1(1.0), Ns, base, ss_lq);
    bool all_conv = true, strict = true;
    for (size_t i = 0; i < rows.size(); ++i) {
      all_conv = all_conv && rows[i].converged;
      if (i > 0) strict = strict && rows[i].end_gap < rows[i - 1].end_gap + 1e-12;
    }
    double slope = sweep_fit_slope(rows);
    report(3, all_conv && strict && slope < -0.1,
           "end gap " + fmt(rows.front().end_gap) + " (N=4) -> " +
               fmt(rows.back().end_gap) + " (N=14), strictly decreasing, " +
               "fit slope " + fmt(slope) + " < -0.1");

    RunOptions pb = base;
    pb.terminal_penalty = true;
    std::vector<SweepRow> prow =
        convergence_sweep(lq, vec1(1.0), Ns, pb, ss_lq);
    bool flat = true;
    double worst = 0.0;
    for (const SweepRow& r : prow) {
      flat = flat && r.converged && r.end_gap <= 1e-6;
      worst = std::max(worst, r.end_gap);
    }
    report(4, flat, "penalized sweep worst end gap " + fmt(worst) + " <= 1e-6");
  }

  // ---------------------------------------------------------------- 5
  // Growth benchmark: closed-loop convergence and a monotone sweep.
  {
    RunOptions base;
    base.T = 20;
    std::vector<SweepRow> rows = convergence_sweep(
        econ, econ_x0, {6, 8, 10, 12, 14, 16}, base, ss_econ);
    double gap12 = 0.0;
    bool conv = true, mono = true;
    for (size_t i = 0; i < rows.size(); ++i) {
      conv = conv && rows[i].converged;
      if (rows[i].N == 12) gap12 = rows[i].end_gap;
      if (i > 0) mono = mono && rows[i].end_gap <= rows[i - 1].end_gap + 1e-12;
    }
    report(5, conv && mono && gap12 <= 1e-2,
           "N=12 end gap " + fmt(gap12) + " <= 1e-2; sweep over {6..16} " +
               (mono ? "monotone decreasing" : "NOT monotone"));
  }

  // ---------------------------------------------------------------- 6
  // Recursive-feasibility audit over the full closed-loop battery.
  std::vector<StoredRun> battery;  // reused by criterion 8b
  {
    auto run_one = [&](const GameSpec& spec, const SteadyStateGne& ss,
                       const Vec& x0, int N, bool penalty,
                       const std::string& label) {
      RunOptions o;
      o.N = N;
      o.T = 20;
      o.terminal_penalty = penalty;
      o.store_predictions = true;
      StoredRun sr{&spec, &ss, run_closed_loop(spec, x0, o, &ss), label};
      for (const StepRecord& s : sr.run.steps)
        note_residual(s.converged, s.kkt_residual);
      battery.push_back(std::move(sr));
    };
    for (double x0 : lq_x0s)
      for (int N : lq_Ns)
        run_one(lq, ss_lq, vec1(x0), N, false,
                "lq x0=" + fmt(x0) + " N=" + std::to_string(N));
    run_one(lq, ss_lq, vec1(1.0), 8, true, "lq x0=1 N=8 penalty");
    for (int N : econ_Ns)
      run_one(econ, ss_econ, econ_x0, N, false,
              "econ N=" + std::to_string(N));

    int witnesses = 0, incomplete = 0;
    for (const StoredRun& sr : battery) {
      if (!sr.run.completed) ++incomplete;
      FeasibilityReport rep = feasibility_probe(sr.run);
      witnesses += static_cast<int>(rep.witnesses.size());
    }
    report(6, witnesses == 0 && incomplete == 0,
           std::to_string(battery.size()) + " closed-loop runs (N >= 4), " +
               std::to_string(witnesses) + " recursive-feasibility witnesses, " +
               std::to_string(incomplete) + " truncated");
  }

  // ---------------------------------------------------------------- 7
  // Equilibrium value vs population optimum on the criterion-1 set.
  {
    double worst_margin = 1e300, worst_ratio = 1e300;
    bool conv = true;
    size_t idx = 0;
    std::vector<double> gaps_x0_1;  // gap over N at x0 = 1
    for (double x0 : lq_x0s)
      for (int N : lq_Ns) {
        const GnepSolution& g = lq_family[idx++];
        OcpSolution o = solve_ocp(lq, vec1(x0), N);
        note_residual(o.converged, o.inner.kkt_residual);
        conv = conv && g.converged && o.converged;
        double j = group_cost(lq, g.pair);
        worst_margin = std::min(worst_margin, j - o.value);
        worst_ratio = std::min(worst_ratio, j / o.value);
        if (x0 == 1.0) gaps_x0_1.push_back(j - o.value);
      }
    for (size_t i = 0; i < econ_family.size(); ++i) {
      const GnepSolution& g = econ_family[i];
      OcpSolution o = solve_ocp(econ, econ_x0, econ_Ns[i]);
      note_residual(o.converged, o.inner.kkt_residual);
      conv = conv && o.converged;
      worst_margin = std::min(worst_margin, group_cost(econ, g.pair) - o.value);
      PoaReport rep = price_of_anarchy(econ, econ_x0, econ_Ns[i]);
      conv = conv && rep.converged;
      worst_ratio = std::min(worst_ratio, rep.ratio);  // offset-cost mode
    }
    double gmin = *std::min_element(gaps_x0_1.begin(), gaps_x0_1.end());
    double gmax = *std::max_element(gaps_x0_1.begin(), gaps_x0_1.end());
    bool no_linear_growth = gmax - gmin <= 2.0 * gaps_x0_1.front();
    report(7,
           conv && worst_margin >= -1e-9 && worst_ratio >= 1.0 - 1e-9 &&
               no_linear_growth,
           "min(V* - Vdia) " + fmt(worst_margin) + " >= -1e-9; min ratio " +
               fmt(worst_ratio) + " >= 1-1e-9; gap spread " +
               fmt(gmax - gmin) + " <= " + fmt(2.0 * gaps_x0_1.front()));
  }

  // ---------------------------------------------------------------- 8
  // Strict dissipation with the shadow-price storage, and the empirical
  // decrease region of the closed-loop energy.
  {
    std::vector<TrajectoryPair> fam;
    for (const GnepSolution& s : lq_family)
      if (s.converged) fam.push_back(s.pair);
    DissipationReport dr =
        dissipation_check(lq, ss_lq, make_storage(ss_lq), fam);

    bool lyap_ok = true;
    std::string lyap_bad;
    for (const StoredRun& sr : battery) {
      StorageFn st = make_storage(*sr.ss, sr.run.states);
      LyapunovTrace tr = lyapunov_trace(*sr.spec, sr.run, *sr.ss, st);
      if (!tr.decrease_outside || !(tr.rho_hat >= tr.rho_tilde)) {
        lyap_ok = false;
        lyap_bad += " " + sr.label;
      }
    }

    bool pass = dr.a_star > 0.0 && dr.holds && lyap_ok;
    report(8, pass,
           "a* = " + fmt(dr.a_star) + (dr.a_star > 0.0 ? " > 0" : " <= 0") +
               " over " + std::to_string(dr.points.size()) +
               " stage pairs; energy decrease outside rho on " +
               std::to_string(battery.size()) + "/" +
               std::to_string(battery.size()) + " runs" +
               (lyap_ok ? "" : " EXCEPT" + lyap_bad));
    if (!dr.violations.empty()) {
      std::printf("        %zu violating stage pairs:\n", dr.violations.size());
      for (int i : dr.violations) {
        const DissipationPoint& p = dr.points[static_cast<size_t>(i)];
        std::printf("          dist=%-10.4g margin=%-11.4g x=%-9.4g u=(%.4g, %.4g)\n",
                    p.dist, p.margin, p.x(0), p.u(0), p.u(1));
      }
    }
  }

  // ---------------------------------------------------------------- 9
  // Numerical hygiene: derivatives, residuals, determinism.
  {
    bool deriv_ok = true;
    double worst = 0.0;
    for (const GameSpec* spec : {&lq, &econ}) {
      std::mt19937 rng(1234);
      for (int i = 0; i < 100; ++i) {
        auto [x, u] = sample_interior_point(*spec, rng);
        double err = check_derivatives(*spec, x, u).max_error();
        worst = std::max(worst, err);
        deriv_ok = deriv_ok && err <= 1e-5;
      }
    }

    ExperimentConfig cfg;
    cfg.task = Task::ClosedLoop;
    cfg.horizons = {8};
    cfg.steps = 5;
    cfg.penalty = PenaltySetting::Both;
    cfg.store_predictions = true;
    fs::path dir_a = fs::temp_directory_path() / "rhg_acceptance_a";
    fs::path dir_b = fs::temp_directory_path() / "rhg_acceptance_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    cfg.out_dir = dir_a.string();
    RunManifest man_a = run_experiment(cfg);
    cfg.out_dir = dir_b.string();
    RunManifest man_b = run_experiment(cfg);
    bool identical = man_a.files == man_b.files && man_a.success &&
                     man_b.success && !man_a.files.empty();
    for (const std::string& f : man_a.files)
      identical = identical && slurp(dir_a / f) == slurp(dir_b / f);

    bool residual_ok = g_max_residual <= 1e-9;
    report(9, deriv_ok && residual_ok && identical,
           "derivative check worst " + fmt(worst) +
               " <= 1e-5 on 200 points; max KKT residual " +
               fmt(g_max_residual) + " <= 1e-9; " +
               std::to_string(man_a.files.size()) +
               " CSV files byte-identical across reruns: " +
               (identical ? "yes" : "NO"));
  }

  std::printf("%d/9 criteria passed\n", 9 - g_failures);
  return g_failures;
}

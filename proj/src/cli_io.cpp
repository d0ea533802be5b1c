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

#include "rhg/cli_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace rhg {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "rhg 0.1.0";

const std::vector<std::string> kTopKeys = {
    "problem", "params",  "task",   "horizon",           "horizons",
    "steps",   "x0",      "penalty", "store_predictions", "solver",
    "out_dir", "seed"};
const std::vector<std::string> kSolverKeys = {
    "fb_eps_init",     "fb_eps_final",    "fb_eps_factor", "newton_tol",
    "stage_tol_factor", "max_iter",        "armijo_slope",  "backtrack_ratio",
    "min_step",        "feasibility_tol", "mode"};
const std::vector<std::string> kLqParams = {
    "A",     "B1",        "B2",           "R",         "Q",
    "x_ref", "input_box", "aggregate_box", "state_box", "x0_default"};
const std::vector<std::string> kEconParams = {
    "q", "r", "alpha", "aggregate_lo", "aggregate_hi", "state_hi", "x0_default"};

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_key(const std::string& key,
                        const std::vector<std::string>& valid) {
  std::string best;
  int best_d = std::numeric_limits<int>::max();
  for (const auto& cand : valid) {
    int d = levenshtein(key, cand);
    if (d < best_d) {
      best_d = d;
      best = cand;
    }
  }
  return best;
}

std::string task_name(Task t) {
  switch (t) {
    case Task::OpenLoop: return "open_loop";
    case Task::ClosedLoop: return "closed_loop";
    case Task::SteadyState: return "steady_state";
    case Task::Sweep: return "sweep";
    case Task::Diagnostics: return "diagnostics";
  }
  return "closed_loop";
}

std::string penalty_name(PenaltySetting p) {
  switch (p) {
    case PenaltySetting::Off: return "off";
    case PenaltySetting::On: return "on";
    case PenaltySetting::Both: return "both";
  }
  return "off";
}

// Collects typed values out of the document, appending one message per
// problem instead of stopping at the first.
struct Reader {
  const json& doc;
  std::vector<std::string>& errors;

  bool has(const char* key) const { return doc.contains(key); }

  template <typename T>
  bool fetch(const char* key, T& out, const char* expected) {
    if (!doc.contains(key)) return false;
    const json& v = doc.at(key);
    bool ok;
    if constexpr (std::is_same_v<T, std::string>)
      ok = v.is_string();
    else if constexpr (std::is_same_v<T, bool>)
      ok = v.is_boolean();
    else if constexpr (std::is_integral_v<T>)
      ok = v.is_number_integer();
    else
      ok = v.is_number();
    if (!ok) {
      errors.push_back("key \"" + std::string(key) + "\": expected " +
                       expected);
      return false;
    }
    out = v.get<T>();
    return true;
  }
};

bool parse_task(const json& v, Task& out, std::vector<std::string>& errors) {
  if (v.is_array()) {
    if (v.size() != 1) {
      errors.push_back("exactly one task must be specified (got " +
                       std::to_string(v.size()) + ")");
      return false;
    }
    return parse_task(v.front(), out, errors);
  }
  if (!v.is_string()) {
    errors.push_back("key \"task\": expected string");
    return false;
  }
  std::string s = v.get<std::string>();
  if (s == "open_loop") out = Task::OpenLoop;
  else if (s == "closed_loop") out = Task::ClosedLoop;
  else if (s == "steady_state") out = Task::SteadyState;
  else if (s == "sweep") out = Task::Sweep;
  else if (s == "diagnostics") out = Task::Diagnostics;
  else {
    errors.push_back("key \"task\": unknown task \"" + s +
                     "\"; valid tasks are open_loop, closed_loop, "
                     "steady_state, sweep, diagnostics");
    return false;
  }
  return true;
}

}  // namespace

ParseResult parse_config(const std::string& text) {
  ParseResult res;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    res.errors.push_back(std::string("invalid JSON: ") + e.what());
    return res;
  }
  if (!doc.is_object()) {
    res.errors.push_back("top level must be a JSON object");
    return res;
  }
  auto& errors = res.errors;
  ExperimentConfig& cfg = res.config;

  for (const auto& item : doc.items()) {
    if (std::find(kTopKeys.begin(), kTopKeys.end(), item.key()) ==
        kTopKeys.end())
      errors.push_back("unknown key \"" + item.key() +
                       "\"; did you mean \"" + nearest_key(item.key(), kTopKeys) +
                       "\"?");
  }

  Reader top{doc, errors};
  top.fetch("problem", cfg.problem, "string");
  if (cfg.problem != "lq_coupled" && cfg.problem != "econ_growth")
    errors.push_back("key \"problem\": unknown problem \"" + cfg.problem +
                     "\"; valid problems are lq_coupled, econ_growth");

  if (top.has("params")) {
    const json& params = doc.at("params");
    if (!params.is_object()) {
      errors.push_back("key \"params\": expected object");
    } else {
      cfg.problem_params = params;
      const auto& valid =
          cfg.problem == "econ_growth" ? kEconParams : kLqParams;
      for (const auto& item : params.items()) {
        if (std::find(valid.begin(), valid.end(), item.key()) == valid.end())
          errors.push_back("unknown key \"params." + item.key() +
                           "\"; did you mean \"params." +
                           nearest_key(item.key(), valid) + "\"?");
      }
    }
  }

  if (top.has("task")) parse_task(doc.at("task"), cfg.task, errors);

  if (top.has("horizon") && top.has("horizons"))
    errors.push_back("specify either \"horizon\" or \"horizons\", not both");
  int single_n = 0;
  if (top.fetch("horizon", single_n, "integer")) cfg.horizons = {single_n};
  if (top.has("horizons")) {
    const json& hs = doc.at("horizons");
    if (!hs.is_array() ||
        !std::all_of(hs.begin(), hs.end(),
                     [](const json& e) { return e.is_number_integer(); })) {
      errors.push_back("key \"horizons\": expected array of integers");
    } else if (hs.empty()) {
      errors.push_back("key \"horizons\": must not be empty");
    } else {
      cfg.horizons = hs.get<std::vector<int>>();
    }
  }
  for (int n : cfg.horizons)
    if (n < 1) {
      errors.push_back("horizon must be ≥ 1");
      break;
    }

  top.fetch("steps", cfg.steps, "integer");
  if (cfg.steps < 1) errors.push_back("steps must be ≥ 1");

  if (top.has("x0")) {
    const json& x0 = doc.at("x0");
    auto as_state = [&](const json& arr) -> bool {
      if (!arr.is_array() ||
          !std::all_of(arr.begin(), arr.end(),
                       [](const json& e) { return e.is_number(); }))
        return false;
      Vec x(arr.size());
      for (size_t i = 0; i < arr.size(); ++i) x(static_cast<int>(i)) = arr[i].get<double>();
      cfg.x_init.push_back(std::move(x));
      return true;
    };
    if (x0.is_number()) {
      cfg.x_init.push_back(Vec::Constant(1, x0.get<double>()));
    } else if (x0.is_array() && !x0.empty() && x0.front().is_array()) {
      bool ok = std::all_of(x0.begin(), x0.end(), as_state);
      if (!ok)
        errors.push_back("key \"x0\": expected number, array of numbers, or "
                         "array of arrays of numbers");
    } else if (!as_state(x0)) {
      errors.push_back("key \"x0\": expected number, array of numbers, or "
                       "array of arrays of numbers");
    }
  }

  if (top.has("penalty")) {
    const json& p = doc.at("penalty");
    if (p.is_boolean()) {
      cfg.penalty = p.get<bool>() ? PenaltySetting::On : PenaltySetting::Off;
    } else if (p.is_string()) {
      std::string s = p.get<std::string>();
      if (s == "off") cfg.penalty = PenaltySetting::Off;
      else if (s == "on") cfg.penalty = PenaltySetting::On;
      else if (s == "both") cfg.penalty = PenaltySetting::Both;
      else
        errors.push_back(
            "key \"penalty\": expected boolean or one of off, on, both");
    } else {
      errors.push_back(
          "key \"penalty\": expected boolean or one of off, on, both");
    }
  }

  top.fetch("store_predictions", cfg.store_predictions, "boolean");
  top.fetch("out_dir", cfg.out_dir, "string");
  top.fetch("seed", cfg.seed, "integer");

  if (top.has("solver")) {
    const json& sv = doc.at("solver");
    if (!sv.is_object()) {
      errors.push_back("key \"solver\": expected object");
    } else {
      for (const auto& item : sv.items()) {
        if (std::find(kSolverKeys.begin(), kSolverKeys.end(), item.key()) ==
            kSolverKeys.end())
          errors.push_back("unknown key \"solver." + item.key() +
                           "\"; did you mean \"solver." +
                           nearest_key(item.key(), kSolverKeys) + "\"?");
      }
      Reader sr{sv, errors};
      SolverOptions& so = cfg.solver;
      sr.fetch("fb_eps_init", so.fb_eps_init, "number");
      sr.fetch("fb_eps_final", so.fb_eps_final, "number");
      sr.fetch("fb_eps_factor", so.fb_eps_factor, "number");
      sr.fetch("newton_tol", so.newton_tol, "number");
      sr.fetch("stage_tol_factor", so.stage_tol_factor, "number");
      sr.fetch("max_iter", so.max_iter, "integer");
      sr.fetch("armijo_slope", so.armijo_slope, "number");
      sr.fetch("backtrack_ratio", so.backtrack_ratio, "number");
      sr.fetch("min_step", so.min_step, "number");
      sr.fetch("feasibility_tol", so.feasibility_tol, "number");
      std::string mode;
      if (sr.fetch("mode", mode, "string")) {
        if (mode == "nonvariational") so.mode = Mode::NonVariational;
        else if (mode == "variational") so.mode = Mode::Variational;
        else
          errors.push_back("key \"solver.mode\": expected nonvariational or "
                           "variational");
      }
    }
  }
  return res;
}

std::string print_config(const ExperimentConfig& cfg) {
  json doc;
  doc["problem"] = cfg.problem;
  doc["params"] = cfg.problem_params;
  doc["task"] = task_name(cfg.task);
  doc["horizons"] = cfg.horizons;
  doc["steps"] = cfg.steps;
  if (!cfg.x_init.empty()) {
    json x0 = json::array();
    for (const Vec& x : cfg.x_init) {
      json row = json::array();
      for (int i = 0; i < x.size(); ++i) row.push_back(x(i));
      x0.push_back(std::move(row));
    }
    doc["x0"] = std::move(x0);
  }
  doc["penalty"] = penalty_name(cfg.penalty);
  doc["store_predictions"] = cfg.store_predictions;
  json sv;
  sv["fb_eps_init"] = cfg.solver.fb_eps_init;
  sv["fb_eps_final"] = cfg.solver.fb_eps_final;
  sv["fb_eps_factor"] = cfg.solver.fb_eps_factor;
  sv["newton_tol"] = cfg.solver.newton_tol;
  sv["stage_tol_factor"] = cfg.solver.stage_tol_factor;
  sv["max_iter"] = cfg.solver.max_iter;
  sv["armijo_slope"] = cfg.solver.armijo_slope;
  sv["backtrack_ratio"] = cfg.solver.backtrack_ratio;
  sv["min_step"] = cfg.solver.min_step;
  sv["feasibility_tol"] = cfg.solver.feasibility_tol;
  sv["mode"] =
      cfg.solver.mode == Mode::Variational ? "variational" : "nonvariational";
  doc["solver"] = std::move(sv);
  doc["out_dir"] = cfg.out_dir;
  doc["seed"] = cfg.seed;
  return doc.dump(2) + "\n";
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto solver_eq = [](const SolverOptions& x, const SolverOptions& y) {
    return x.fb_eps_init == y.fb_eps_init && x.fb_eps_final == y.fb_eps_final &&
           x.fb_eps_factor == y.fb_eps_factor && x.newton_tol == y.newton_tol &&
           x.stage_tol_factor == y.stage_tol_factor &&
           x.max_iter == y.max_iter && x.armijo_slope == y.armijo_slope &&
           x.backtrack_ratio == y.backtrack_ratio && x.min_step == y.min_step &&
           x.feasibility_tol == y.feasibility_tol && x.mode == y.mode;
  };
  if (!(a.problem == b.problem && a.problem_params == b.problem_params &&
        a.task == b.task && a.horizons == b.horizons && a.steps == b.steps &&
        a.penalty == b.penalty &&
        a.store_predictions == b.store_predictions &&
        a.out_dir == b.out_dir && a.seed == b.seed &&
        solver_eq(a.solver, b.solver)))
    return false;
  if (a.x_init.size() != b.x_init.size()) return false;
  for (size_t i = 0; i < a.x_init.size(); ++i)
    if (a.x_init[i].size() != b.x_init[i].size() || a.x_init[i] != b.x_init[i])
      return false;
  return true;
}

void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must look like key=value: " +
                                assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json* node = &doc;
  size_t start = 0;
  for (;;) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot - start);
    if (key.empty())
      throw std::invalid_argument("override has an empty path segment: " +
                                  assignment);
    if (dot == std::string::npos) {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::parse_error&) {
        parsed = value;  // bare words are taken as strings
      }
      (*node)[key] = std::move(parsed);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

namespace {

double get_num(const json& v, const std::string& key) {
  if (!v.is_number())
    throw std::invalid_argument("parameter \"" + key + "\": expected number");
  return v.get<double>();
}

}  // namespace

GameSpec build_problem(const std::string& name, const json& params) {
  if (!params.is_object() && !params.is_null())
    throw std::invalid_argument("problem parameters must be an object");
  if (name == "lq_coupled") {
    LqCoupledParams p;
    for (const auto& item : params.items()) {
      const std::string& k = item.key();
      const json& v = item.value();
      if (k == "A") p.A = get_num(v, k);
      else if (k == "B1") p.B1 = get_num(v, k);
      else if (k == "B2") p.B2 = get_num(v, k);
      else if (k == "x_ref") p.x_ref = get_num(v, k);
      else if (k == "input_box") p.input_box = get_num(v, k);
      else if (k == "aggregate_box") p.aggregate_box = get_num(v, k);
      else if (k == "state_box") p.state_box = get_num(v, k);
      else if (k == "x0_default") p.x0_default = get_num(v, k);
      else if (k == "R") {
        if (!v.is_array() || v.size() != 2)
          throw std::invalid_argument("parameter \"R\": expected 2x2 array");
        for (int i = 0; i < 2; ++i) {
          const json& row = v[static_cast<size_t>(i)];
          if (!row.is_array() || row.size() != 2)
            throw std::invalid_argument("parameter \"R\": expected 2x2 array");
          for (int j = 0; j < 2; ++j)
            p.R[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                get_num(row[static_cast<size_t>(j)], "R");
        }
      } else if (k == "Q") {
        if (!v.is_array() || v.size() != 2)
          throw std::invalid_argument("parameter \"Q\": expected array of 2");
        for (int i = 0; i < 2; ++i)
          p.Q[static_cast<size_t>(i)] = get_num(v[static_cast<size_t>(i)], "Q");
      } else {
        throw std::invalid_argument("unknown parameter \"" + k +
                                    "\" for problem lq_coupled");
      }
    }
    return build_lq_coupled(p);
  }
  if (name == "econ_growth") {
    EconGrowthParams p;
    auto pair_of = [](const json& v, const std::string& key) {
      if (!v.is_array() || v.size() != 2)
        throw std::invalid_argument("parameter \"" + key +
                                    "\": expected array of 2");
      return std::array<double, 2>{get_num(v[0], key), get_num(v[1], key)};
    };
    for (const auto& item : params.items()) {
      const std::string& k = item.key();
      const json& v = item.value();
      if (k == "q") p.q = pair_of(v, k);
      else if (k == "r") p.r = pair_of(v, k);
      else if (k == "alpha") p.alpha = pair_of(v, k);
      else if (k == "aggregate_lo") p.aggregate_lo = get_num(v, k);
      else if (k == "aggregate_hi") p.aggregate_hi = get_num(v, k);
      else if (k == "state_hi") p.state_hi = get_num(v, k);
      else if (k == "x0_default") p.x0_default = pair_of(v, k);
      else
        throw std::invalid_argument("unknown parameter \"" + k +
                                    "\" for problem econ_growth");
    }
    return build_econ_growth(p);
  }
  throw std::invalid_argument("unknown problem \"" + name + "\"");
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << header[j];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      if (!std::isnan(row[j])) out << format_double(row[j]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("cannot write file: " + path);
}

namespace {

std::string now_iso() {
  std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int env_workers() {
  const char* w = std::getenv("RHG_WORKERS");
  if (!w) return 0;
  int out = 0;
  auto res = std::from_chars(w, w + std::strlen(w), out);
  if (res.ec != std::errc() || out < 0) return 0;
  return out;
}

// Keeps run_experiment's bookkeeping in one place.
struct Session {
  const ExperimentConfig& cfg;
  RunManifest& man;
  std::filesystem::path dir;

  void note_solve(bool converged, long iterations, double residual) {
    ++man.solves;
    if (!converged) ++man.failures;
    man.total_iterations += iterations;
    if (std::isfinite(residual))
      man.max_residual = std::max(man.max_residual, residual);
  }

  void table(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows) {
    write_csv((dir / name).string(), header, rows);
    man.files.push_back(name);
  }
};

std::vector<std::string> state_input_header(const Dims& d,
                                            const std::string& index) {
  std::vector<std::string> h = {index};
  for (int i = 0; i < d.n_x; ++i) h.push_back("x" + std::to_string(i));
  for (int j = 0; j < d.n_u(); ++j) h.push_back("u" + std::to_string(j));
  return h;
}

std::vector<std::vector<double>> pair_rows(const TrajectoryPair& pair) {
  std::vector<std::vector<double>> rows;
  const int nx = static_cast<int>(pair.x[0].size());
  const int nu = pair.N > 0 ? static_cast<int>(pair.u[0].size()) : 0;
  for (int k = 0; k <= pair.N; ++k) {
    std::vector<double> row;
    row.push_back(k);
    for (int i = 0; i < nx; ++i) row.push_back(pair.x[static_cast<size_t>(k)](i));
    for (int j = 0; j < nu; ++j)
      row.push_back(k < pair.N ? pair.u[static_cast<size_t>(k)](j)
                               : std::numeric_limits<double>::quiet_NaN());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<bool> penalty_variants(PenaltySetting p) {
  switch (p) {
    case PenaltySetting::Off: return {false};
    case PenaltySetting::On: return {true};
    case PenaltySetting::Both: return {false, true};
  }
  return {false};
}

// File-name suffix distinguishing penalty variant / initial condition /
// horizon when a task writes more than one table of a kind.
std::string suffix(PenaltySetting setting, bool pen, size_t xi, size_t n_x0,
                   int N, size_t n_horizons) {
  std::string s;
  if (setting == PenaltySetting::Both) s += pen ? "_pen" : "_nopen";
  if (n_x0 > 1) s += "_x" + std::to_string(xi);
  if (n_horizons > 1) s += "_N" + std::to_string(N);
  return s;
}

std::vector<std::vector<double>> steady_row(const SteadyStateGne& ss,
                                            std::vector<std::string>& header) {
  header.clear();
  std::vector<double> row;
  for (int i = 0; i < ss.x_s.size(); ++i) {
    header.push_back("x_s" + std::to_string(i));
    row.push_back(ss.x_s(i));
  }
  for (int j = 0; j < ss.u_s.size(); ++j) {
    header.push_back("u_s" + std::to_string(j));
    row.push_back(ss.u_s(j));
  }
  for (size_t v = 0; v < ss.lambda_s.size(); ++v) {
    for (int i = 0; i < ss.lambda_s[v].size(); ++i) {
      header.push_back("lambda_s" + std::to_string(v) + "_" + std::to_string(i));
      row.push_back(ss.lambda_s[v](i));
    }
  }
  header.push_back("kkt_residual");
  row.push_back(ss.kkt_residual);
  header.push_back("interiority");
  row.push_back(ss.interiority);
  header.push_back("converged");
  row.push_back(ss.converged ? 1.0 : 0.0);
  return {row};
}

void write_closed_loop_tables(Session& ses, const GameSpec& spec,
                              const ClosedLoopRun& run,
                              const std::string& sfx) {
  FeasibilityReport probe = feasibility_probe(run,
      run.options.solver.feasibility_tol);
  std::vector<std::string> header = state_input_header(spec.dims, "t");
  header.push_back("kkt_residual");
  header.push_back("iterations");
  header.push_back("feasible");
  std::vector<std::vector<double>> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t t = 0; t < run.states.size(); ++t) {
    std::vector<double> row;
    row.push_back(static_cast<double>(t));
    for (int i = 0; i < run.states[t].size(); ++i) row.push_back(run.states[t](i));
    bool has_step = t < run.inputs.size();
    for (int j = 0; j < spec.dims.n_u(); ++j)
      row.push_back(has_step ? run.inputs[t](j) : nan);
    if (t < run.steps.size()) {
      row.push_back(run.steps[t].kkt_residual);
      row.push_back(run.steps[t].iterations);
      row.push_back(probe.feasible[t] ? 1.0 : 0.0);
    } else {
      row.push_back(nan);
      row.push_back(nan);
      row.push_back(nan);
    }
    rows.push_back(std::move(row));
  }
  ses.table("closed_loop" + sfx + ".csv", header, rows);

  if (run.options.store_predictions) {
    for (size_t t = 0; t < run.predictions.size(); ++t)
      ses.table("closed_loop" + sfx + "_pred_t" + std::to_string(t) + ".csv",
                state_input_header(spec.dims, "k"),
                pair_rows(run.predictions[t]));
  }
  for (const StepRecord& s : run.steps)
    ses.note_solve(s.converged, s.iterations, s.kkt_residual);
}

void run_open_loop_task(Session& ses, const GameSpec& spec,
                        const std::vector<Vec>& x0s) {
  const ExperimentConfig& cfg = ses.cfg;
  std::vector<std::string> sum_header = {"x0_index", "N",         "penalty",
                                         "converged", "kkt_residual",
                                         "iterations", "group_cost",
                                         "max_violation"};
  std::vector<std::vector<double>> summary;
  for (bool pen : penalty_variants(cfg.penalty)) {
    GameSpec active = spec;
    if (pen) {
      SteadyStateGne ss = solve_steady_state(spec, cfg.solver);
      ses.note_solve(ss.converged, 0, ss.kkt_residual);
      active = terminal_penalty(spec, ss);
    }
    for (size_t xi = 0; xi < x0s.size(); ++xi) {
      for (int N : cfg.horizons) {
        GnepSolution sol = solve_gnep(active, x0s[xi], N, cfg.solver);
        ses.note_solve(sol.converged, sol.iterations, sol.kkt_residual);
        std::string sfx = suffix(cfg.penalty, pen, xi, x0s.size(), N,
                                 cfg.horizons.size());
        ses.table("prediction" + sfx + ".csv",
                  state_input_header(spec.dims, "k"), pair_rows(sol.pair));
        summary.push_back({static_cast<double>(xi), static_cast<double>(N),
                           pen ? 1.0 : 0.0, sol.converged ? 1.0 : 0.0,
                           sol.kkt_residual,
                           static_cast<double>(sol.iterations),
                           group_cost(active, sol.pair),
                           max_violation(active, sol.pair)});
      }
    }
  }
  ses.table("solve_summary.csv", sum_header, summary);
}

void run_closed_loop_task(Session& ses, const GameSpec& spec,
                          const std::vector<Vec>& x0s) {
  const ExperimentConfig& cfg = ses.cfg;
  for (bool pen : penalty_variants(cfg.penalty)) {
    for (size_t xi = 0; xi < x0s.size(); ++xi) {
      for (int N : cfg.horizons) {
        RunOptions o;
        o.N = N;
        o.T = cfg.steps;
        o.terminal_penalty = pen;
        o.store_predictions = cfg.store_predictions;
        o.solver = cfg.solver;
        ClosedLoopRun run = run_closed_loop(spec, x0s[xi], o);
        write_closed_loop_tables(
            ses, spec, run,
            suffix(cfg.penalty, pen, xi, x0s.size(), N, cfg.horizons.size()));
      }
    }
  }
}

void run_sweep_task(Session& ses, const GameSpec& spec,
                    const std::vector<Vec>& x0s) {
  const ExperimentConfig& cfg = ses.cfg;
  SteadyStateGne ss = solve_steady_state(spec, cfg.solver);
  ses.note_solve(ss.converged, 0, ss.kkt_residual);
  if (!ss.converged)
    throw std::runtime_error("steady-state solve did not converge");
  for (bool pen : penalty_variants(cfg.penalty)) {
    for (size_t xi = 0; xi < x0s.size(); ++xi) {
      RunOptions base;
      base.T = cfg.steps;
      base.terminal_penalty = pen;
      base.solver = cfg.solver;
      std::vector<SweepRow> rows = convergence_sweep(
          spec, x0s[xi], cfg.horizons, base, ss, env_workers());
      std::vector<std::vector<double>> table;
      for (const SweepRow& r : rows) {
        table.push_back({static_cast<double>(r.N), r.end_gap, r.loop_cost,
                         static_cast<double>(r.iterations),
                         r.converged ? 1.0 : 0.0});
        ses.note_solve(r.converged, r.iterations, 0.0);
      }
      std::string sfx =
          suffix(cfg.penalty, pen, xi, x0s.size(), 0, 1);
      ses.table("sweep" + sfx + ".csv",
                {"N", "end_gap", "loop_cost", "iterations", "converged"},
                table);
      ses.table("sweep_fit" + sfx + ".csv", {"slope"},
                {{sweep_fit_slope(rows)}});
    }
  }
}

void run_diagnostics_task(Session& ses, const GameSpec& spec,
                          const std::vector<Vec>& x0s) {
  const ExperimentConfig& cfg = ses.cfg;
  SteadyStateGne ss = solve_steady_state(spec, cfg.solver);
  ses.note_solve(ss.converged, 0, ss.kkt_residual);
  if (!ss.converged)
    throw std::runtime_error("steady-state solve did not converge");
  {
    std::vector<std::string> header;
    auto rows = steady_row(ss, header);
    ses.table("steady_state.csv", header, rows);
  }
  Vec su(ss.x_s.size() + ss.u_s.size());
  su << ss.x_s, ss.u_s;
  const double tp_eps = 0.05 * (1.0 + su.norm());

  for (bool pen : penalty_variants(cfg.penalty)) {
    GameSpec active = pen ? terminal_penalty(spec, ss) : spec;
    std::string psfx = (cfg.penalty == PenaltySetting::Both)
                           ? (pen ? "_pen" : "_nopen")
                           : "";

    // Closed-loop runs come first: their visited states fix the storage
    // offset used by every later report.
    std::vector<ClosedLoopRun> runs;
    std::vector<Vec> visited;
    for (size_t xi = 0; xi < x0s.size(); ++xi) {
      RunOptions o;
      o.N = cfg.horizons.front();
      o.T = cfg.steps;
      o.terminal_penalty = pen;
      o.store_predictions = true;
      o.solver = cfg.solver;
      ClosedLoopRun run = run_closed_loop(spec, x0s[xi], o, &ss);
      for (const StepRecord& s : run.steps)
        ses.note_solve(s.converged, s.iterations, s.kkt_residual);
      visited.insert(visited.end(), run.states.begin(), run.states.end());
      runs.push_back(std::move(run));
    }
    StorageFn storage = make_storage(ss, visited);

    std::vector<std::vector<double>> verify_rows, turnpike_rows, profile_rows,
        poa_rows;
    std::vector<TrajectoryPair> family;
    for (size_t xi = 0; xi < x0s.size(); ++xi) {
      for (int N : cfg.horizons) {
        GnepSolution sol = solve_gnep(active, x0s[xi], N, cfg.solver);
        ses.note_solve(sol.converged, sol.iterations, sol.kkt_residual);
        VerifyReport rep = verify_gne(active, sol, 1e-6, cfg.solver);
        for (int v = 0; v < spec.dims.M; ++v)
          verify_rows.push_back(
              {static_cast<double>(xi), static_cast<double>(N),
               static_cast<double>(v), rep.j_candidate(v), rep.gap(v),
               rep.gap(v) / (1.0 + std::abs(rep.j_candidate(v))),
               rep.verifiable[static_cast<size_t>(v)] ? 1.0 : 0.0,
               rep.certified ? 1.0 : 0.0});
        TurnpikeReport tp = turnpike_count(sol.pair, ss, tp_eps);
        turnpike_rows.push_back({static_cast<double>(xi),
                                 static_cast<double>(N), tp.eps,
                                 static_cast<double>(tp.count),
                                 tp.end_state_dist});
        TurnpikeProfile prof = turnpike_profile(
            sol.pair, ss,
            {0.5 * tp_eps, tp_eps, 2.0 * tp_eps, 4.0 * tp_eps});
        for (size_t e = 0; e < prof.eps.size(); ++e)
          profile_rows.push_back(
              {static_cast<double>(xi), static_cast<double>(N), prof.eps[e],
               static_cast<double>(prof.count[e]),
               static_cast<double>(prof.entry[e]),
               static_cast<double>(prof.exit[e]), prof.dwell_constant});
        PoaReport poa = price_of_anarchy(active, x0s[xi], N, cfg.solver);
        poa_rows.push_back({static_cast<double>(xi), static_cast<double>(N),
                            poa.j_gne, poa.v_ocp, poa.gap, poa.ratio,
                            poa.offset_shift, poa.shifted ? 1.0 : 0.0,
                            poa.converged ? 1.0 : 0.0});
        family.push_back(sol.pair);
      }
    }
    ses.table("verify" + psfx + ".csv",
              {"x0_index", "N", "agent", "j_candidate", "gap", "rel_gap",
               "verifiable", "certified"},
              verify_rows);
    ses.table("turnpike" + psfx + ".csv",
              {"x0_index", "N", "eps", "count", "end_state_dist"},
              turnpike_rows);
    ses.table("turnpike_profile" + psfx + ".csv",
              {"x0_index", "N", "eps", "count", "entry", "exit",
               "dwell_constant"},
              profile_rows);
    ses.table("poa" + psfx + ".csv",
              {"x0_index", "N", "j_gne", "v_ocp", "gap", "ratio",
               "offset_shift", "shifted", "converged"},
              poa_rows);

    DissipationReport diss = dissipation_check(spec, ss, storage, family);
    std::vector<std::vector<double>> diss_rows;
    for (size_t i = 0; i < diss.points.size(); ++i) {
      const DissipationPoint& pt = diss.points[i];
      bool viol = std::find(diss.violations.begin(), diss.violations.end(),
                            static_cast<int>(i)) != diss.violations.end();
      diss_rows.push_back({static_cast<double>(i), pt.dist, pt.supply,
                           pt.storage_gain, pt.margin, viol ? 1.0 : 0.0});
    }
    ses.table("dissipation" + psfx + ".csv",
              {"sample", "dist", "supply", "storage_gain", "margin",
               "violation"},
              diss_rows);
    ses.table("dissipation_summary" + psfx + ".csv",
              {"a_star", "points", "violations", "holds"},
              {{diss.a_star, static_cast<double>(diss.points.size()),
                static_cast<double>(diss.violations.size()),
                diss.holds ? 1.0 : 0.0}});

    std::vector<std::vector<double>> lyap_rows, lyap_sum;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t xi = 0; xi < x0s.size(); ++xi) {
      const ClosedLoopRun& run = runs[xi];
      LyapunovTrace tr = lyapunov_trace(spec, run, ss, storage);
      for (size_t t = 0; t < tr.w.size(); ++t)
        lyap_rows.push_back({static_cast<double>(xi), static_cast<double>(t),
                             tr.dist[t], tr.v_star[t], tr.storage[t], tr.w[t],
                             t < tr.dw.size() ? tr.dw[t] : nan});
      lyap_sum.push_back({static_cast<double>(xi), tr.rho_tilde, tr.rho_hat,
                          tr.max_successor_dist,
                          tr.decrease_outside ? 1.0 : 0.0});
    }
    ses.table("lyapunov" + psfx + ".csv",
              {"x0_index", "t", "dist", "v_star", "storage", "w", "dw"},
              lyap_rows);
    ses.table("lyapunov_summary" + psfx + ".csv",
              {"x0_index", "rho_tilde", "rho_hat", "max_successor_dist",
               "decrease_outside"},
              lyap_sum);
  }
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg) {
  RunManifest man;
  man.version = kVersion;
  man.config_echo = print_config(cfg);
  man.started_at = now_iso();

  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory: " +
                             dir.string());

  GameSpec spec = build_problem(cfg.problem, cfg.problem_params);
  std::vector<Vec> x0s = cfg.x_init;
  if (x0s.empty()) x0s.push_back(spec.default_x0);
  for (const Vec& x : x0s)
    if (x.size() != spec.dims.n_x)
      throw std::invalid_argument(
          "x0 dimension mismatch: expected " + std::to_string(spec.dims.n_x) +
          " components, got " + std::to_string(x.size()));

  Session ses{cfg, man, dir};
  switch (cfg.task) {
    case Task::OpenLoop:
      run_open_loop_task(ses, spec, x0s);
      break;
    case Task::ClosedLoop:
      run_closed_loop_task(ses, spec, x0s);
      break;
    case Task::SteadyState: {
      SteadyStateGne ss = solve_steady_state(spec, cfg.solver);
      ses.note_solve(ss.converged, 0, ss.kkt_residual);
      std::vector<std::string> header;
      auto rows = steady_row(ss, header);
      ses.table("steady_state.csv", header, rows);
      break;
    }
    case Task::Sweep:
      run_sweep_task(ses, spec, x0s);
      break;
    case Task::Diagnostics:
      run_diagnostics_task(ses, spec, x0s);
      break;
  }

  man.finished_at = now_iso();
  man.success = man.failures == 0;

  json mj;
  mj["version"] = man.version;
  mj["config"] = json::parse(man.config_echo);
  mj["started_at"] = man.started_at;
  mj["finished_at"] = man.finished_at;
  mj["files"] = man.files;
  mj["telemetry"] = {{"solves", man.solves},
                     {"failures", man.failures},
                     {"total_iterations", man.total_iterations},
                     {"max_residual", man.max_residual}};
  mj["success"] = man.success;
  std::ofstream mout(dir / "manifest.json", std::ios::binary);
  if (!mout)
    throw std::runtime_error("cannot write file: " +
                             (dir / "manifest.json").string());
  mout << mj.dump(2) << "\n";
  return man;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"finite-horizon equilibrium solver and receding-horizon "
               "experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;

  struct SubDef {
    const char* name;
    const char* help;
    const char* task;
  };
  const SubDef subs[] = {
      {"solve", "solve open-loop problems and export the predictions",
       "open_loop"},
      {"run", "run the receding-horizon closed loop", "closed_loop"},
      {"steady-state", "solve for the steady state and its multipliers",
       "steady_state"},
      {"sweep", "sweep the closed loop over a horizon range", "sweep"},
      {"diagnose", "run the verification and analysis battery", "diagnostics"},
  };
  for (const SubDef& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "experiment config file (JSON)");
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--override", overrides,
                    "dotted-path override key=value (repeatable)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string text = "{}";
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
      std::cerr << "error: cannot read config file: " << config_path << "\n";
      return 2;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::cerr << "config error: invalid JSON: " << e.what() << "\n";
    return 2;
  }
  for (const SubDef& s : subs) {
    if (app.get_subcommand(s.name)->parsed()) doc["task"] = s.task;
  }
  if (!out_dir.empty()) doc["out_dir"] = out_dir;
  try {
    for (const std::string& ov : overrides) apply_override(doc, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  ParseResult parsed = parse_config(doc.dump());
  if (!parsed.ok()) {
    for (const std::string& err : parsed.errors)
      std::cerr << "config error: " << err << "\n";
    return 2;
  }

  try {
    RunManifest man = run_experiment(parsed.config);
    std::cout << "wrote " << man.files.size() << " file(s) to "
              << parsed.config.out_dir << " (" << man.solves << " solves, "
              << man.failures << " failures, max residual "
              << format_double(man.max_residual) << ")\n";
    return man.success ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace rhg

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

#include "rhg/builders.hpp"
#include "rhg/diagnostics.hpp"

#include <json.hpp>

#include <string>

namespace rhg {

/// Experiment kinds dispatched by run_experiment.
enum class Task { OpenLoop, ClosedLoop, SteadyState, Sweep, Diagnostics };

/// Terminal-penalty selector; Both runs the off and on variants and writes
/// separate tables.
enum class PenaltySetting { Off, On, Both };

/// A parsed experiment description. print_config/parse_config round-trip
/// this structure exactly.
struct ExperimentConfig {
  std::string problem = "lq_coupled";
  nlohmann::json problem_params = nlohmann::json::object();
  Task task = Task::ClosedLoop;
  std::vector<int> horizons = {8};  ///< one entry unless task = Sweep
  int steps = 20;
  std::vector<Vec> x_init;  ///< empty means the problem default
  PenaltySetting penalty = PenaltySetting::Off;
  bool store_predictions = false;
  SolverOptions solver;
  std::string out_dir = "out";
  std::uint32_t seed = 1234;  ///< derivative-check sampling only
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Validated config or the full list of validation errors (never just the
/// first).
struct ParseResult {
  ExperimentConfig config;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Parses the JSON experiment format. Unknown keys are reported together
/// with the nearest valid key; type mismatches name the expected type.
ParseResult parse_config(const std::string& text);

/// Canonical JSON form of a config; parse_config(print_config(c)) == c.
std::string print_config(const ExperimentConfig& config);

/// Applies a dotted-path override ("solver.newton_tol=1e-8",
/// "problem.x_ref=0.5") onto the JSON document before parsing. The value
/// side is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Instantiates a benchmark family by name with parameter overrides.
/// Throws std::invalid_argument for unknown names or parameters.
GameSpec build_problem(const std::string& name, const nlohmann::json& params);

/// Reproducibility record written next to the result files.
struct RunManifest {
  std::string config_echo;  ///< canonical config JSON
  std::string version;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> files;  ///< result files, relative to out_dir
  int solves = 0;
  int failures = 0;
  long total_iterations = 0;
  double max_residual = 0;
  bool success = false;
};

/// Executes the configured task, writes the CSV outputs and manifest.json
/// under config.out_dir, and returns the manifest. Worker count for sweeps
/// comes from the RHG_WORKERS environment variable (default: hardware
/// concurrency).
RunManifest run_experiment(const ExperimentConfig& config);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Writes a comma-delimited table with a header row; numbers use
/// format_double.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Entry point behind the command-line binary; exposed for reuse.
int cli_main(int argc, char** argv);

}  // namespace rhg

#pragma once

// Config-driven experiments behind the `imch` driver. A config is JSON; it is
// resolved against per-experiment defaults so the stored config.json is
// complete and its hash identifies the run. Outputs land in one directory:
//   config.json   resolved config + hash
//   summary.json  experiment report
//   *.csv, *.bin  data (CSV headers carry the hash)
//   run.json      wall-clock facts; never compared on replay
//   FAILED        present only when the run stopped on an error

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "imch/error.hpp"
#include "imch/io.hpp"
#include "imch/manifold.hpp"

namespace imch {

const std::vector<std::string>& experiment_names();

/// Defaults merged under `user`; invalid-config on unknown keys, wrong types or
/// an unknown experiment name.
Json resolve_config(const Json& user);

/// IMCH_<KEY> for the top-level scalar keys (IMCH_SEED, IMCH_M, IMCH_DT, ...).
/// Values parse as JSON when possible, otherwise as strings.
void apply_env_overrides(Json& config,
                         const std::function<const char*(const char*)>& lookup = [](const char* k) {
                           return std::getenv(k);
                         });

struct Diagnostic {
  bool error = false;
  std::string message;
};

/// Schema and cross-field checks. Never throws; malformed input becomes an error diagnostic.
std::vector<Diagnostic> validate(const Json& config);

/// Builders shared by the runners, the tests and the acceptance binary. They
/// expect a resolved config; R_star = "calibrate" is resolved by the runners.
SolverConfig solver_from(const Json& config);
ManifoldConfig manifold_from(const Json& config);

struct RunOptions {
  std::filesystem::path out;
  int threads = 1;
};

struct RunResult {
  int exit_code = 0;
  std::string message;
  Json summary;
  std::vector<Diagnostic> diagnostics;
};

/// 0 ok, 2 invalid config or argument, 3 regime violation (including Newton and
/// convergence failures), 4 numeric failure, 1 anything else.
int exit_code_for(ErrorKind kind);

RunResult run_experiment(const Json& config, const RunOptions& options);

struct ReplayReport {
  bool identical = false;
  int exit_code = 0;
  std::vector<std::string> compared;
  std::vector<std::string> mismatches;
};

/// Re-runs the config stored in `dir` into a scratch directory and compares
/// every data file byte for byte (run.json excluded).
ReplayReport replay(const std::filesystem::path& dir, int threads = 1);

}  // namespace imch

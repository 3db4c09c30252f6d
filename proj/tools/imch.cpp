// imch: command-line driver. One experiment per invocation.
//
//   imch spectrum --max 100 --out runs/spec
//   imch simulate --config cfg.json --seed 3
//   imch <experiment> --replay runs/spec
//
// Precedence: built-in defaults < --config file < IMCH_* environment < flags.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>

#include "imch/experiment.hpp"

using namespace imch;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string replay_dir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory (default runs/<experiment>-<hash>)");
  sub->add_option("--seed", c.seed, "RNG seed");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--replay", c.replay_dir, "re-run the config stored in DIR and compare outputs")
      ->check(CLI::ExistingDirectory);
}

// Flags that land in params.<key>; only set when given on the command line.
struct ParamFlags {
  std::map<std::string, double> numbers;
  std::map<std::string, std::int64_t> integers;
};

void add_number(CLI::App* sub, ParamFlags& p, const std::string& key, const std::string& help) {
  sub->add_option_function<double>("--" + key, [&p, key](const double& v) { p.numbers[key] = v; }, help);
}

void add_integer(CLI::App* sub, ParamFlags& p, const std::string& key, const std::string& help) {
  sub->add_option_function<std::int64_t>("--" + key, [&p, key](const std::int64_t& v) { p.integers[key] = v; },
                                         help);
}

int report_failure(const RunResult& r) {
  std::cerr << "imch: " << r.message << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-Galerkin inertial-manifold toolkit for the periodic Cahn-Hilliard equation"};
  app.require_subcommand(1);

  Common common;
  ParamFlags params;
  std::optional<std::int64_t> grid_points;
  std::optional<double> grid_radius;

  const std::map<std::string, std::string> about = {
      {"spectrum", "eigenvalues of A with multiplicities"},
      {"gaps", "spectral gaps and the averaged gap condition"},
      {"search-shells", "shell-separation search on the lattice"},
      {"simulate", "integrate the original or cut-off equation"},
      {"cone-check", "strong cone condition: Monte-Carlo, assembled form, trajectory monitor"},
      {"avg-check", "spatial averaging residual and its r sweep"},
      {"build-manifold", "sample Phi over H_+"},
      {"track", "exponential tracking by manifold trajectories"},
      {"phi-derivative", "derivative of Phi and its finite-difference check"},
      {"validate", "schema and cross-field checks only"},
  };
  for (const std::string& name : experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    add_common(sub, common);
    if (name == "spectrum") {
      add_integer(sub, params, "max", "largest eigenvalue listed");
    } else if (name == "gaps") {
      add_integer(sub, params, "max", "largest eigenvalue scanned");
      add_number(sub, params, "rho", "minimum gap lambda_{N+1} - lambda_N");
      add_number(sub, params, "k", "shell half-width");
      add_number(sub, params, "L", "Lipschitz constant (default: from the nonlinearity)");
      add_number(sub, params, "delta", "averaging residual bound");
    } else if (name == "search-shells") {
      add_number(sub, params, "k", "shell half-width");
      add_number(sub, params, "r", "separation radius");
      add_number(sub, params, "rho", "minimum gap");
      add_integer(sub, params, "max", "largest eigenvalue searched");
    } else if (name == "cone-check") {
      add_integer(sub, params, "mc_samples", "Monte-Carlo samples");
    } else if (name == "build-manifold") {
      add_integer(sub, params, "samples", "random samples in H_+ (ignored with --grid)");
      sub->add_option("--grid", grid_points, "grid points per axis on the first two H_+ coordinates");
      sub->add_option("--radius", grid_radius, "grid half-width");
    } else if (name == "track") {
      add_integer(sub, params, "runs", "number of initial conditions");
    }
  }

  CLI11_PARSE(app, argc, argv);
  const std::string experiment = app.get_subcommands().front()->get_name();

  try {
    if (!common.replay_dir.empty()) {
      const ReplayReport rep = replay(common.replay_dir, common.threads);
      for (const auto& m : rep.mismatches) std::cout << "mismatch " << m << "\n";
      std::cout << (rep.identical ? "identical" : "DIFFERENT") << " (" << rep.compared.size() << " files compared)\n";
      return rep.identical ? 0 : 1;
    }

    Json user = Json::object();
    if (!common.config_path.empty()) {
      user = Json::parse(read_text(common.config_path), nullptr, false);
      if (user.is_discarded() || !user.is_object()) {
        std::cerr << "imch: " << common.config_path << " is not a JSON object\n";
        return 2;
      }
    }
    if (user.contains("experiment") && user.at("experiment") != experiment) {
      std::cerr << "imch: config names experiment " << user.at("experiment") << " but the subcommand is "
                << experiment << "\n";
      return 2;
    }
    user["experiment"] = experiment;
    apply_env_overrides(user);
    if (common.seed) user["seed"] = *common.seed;
    for (const auto& [k, v] : params.numbers) user["params"][k] = v;
    for (const auto& [k, v] : params.integers) user["params"][k] = v;
    if (grid_points || grid_radius) {
      if (!grid_points || !grid_radius) {
        std::cerr << "imch: --grid and --radius go together\n";
        return 2;
      }
      user["params"]["grid"] = {{"points", *grid_points}, {"radius", *grid_radius}};
    }

    std::filesystem::path out = common.out;
    if (out.empty()) out = std::filesystem::path("runs") / (experiment + "-" + config_hash(resolve_config(user)));

    const RunResult r = run_experiment(user, {out, common.threads});
    for (const auto& d : r.diagnostics) std::cerr << (d.error ? "error: " : "warning: ") << d.message << "\n";
    if (r.exit_code != 0) return report_failure(r);
    std::cout << out.string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "imch: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "imch: " << e.what() << "\n";
    return 1;
  }
}

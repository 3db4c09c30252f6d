#include "imch/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "imch/cone.hpp"
#include "imch/lattice.hpp"
#include "imch/rng.hpp"

namespace imch {

namespace fs = std::filesystem;

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"spectrum",  "gaps",           "search-shells", "simulate",
                                                 "cone-check", "avg-check",     "build-manifold", "track",
                                                 "phi-derivative", "validate"};
  return names;
}

namespace {

// RNG streams, one per purpose, so adding draws in one place never shifts another.
constexpr std::uint64_t kStreamInitial = 0;
constexpr std::uint64_t kStreamMonteCarlo = 1;
constexpr std::uint64_t kStreamPerturbation = 2;
constexpr std::uint64_t kStreamSamples = 3;
constexpr std::uint64_t kStreamTracking = 4;
constexpr std::uint64_t kStreamDerivative = 5;

Json base_defaults() {
  return Json{
      {"experiment", ""},
      {"seed", 1},
      {"M", 16},
      {"dt", 0.01},
      {"t_end", 1.0},
      {"scheme", "ETDRK2"},
      {"checkpoint_stride", 10},
      {"allow_unstable_dt", false},
      {"modified", false},
      {"nonlinearity", {{"name", "sine"}, {"params", {{"amplitude", 0.1}}}}},
      {"projector", {{"N_index", 6}, {"k", 0.0}}},
      {"cutoff", nullptr},
      {"initial", {{"amplitude", 1.0}, {"decay", 1.0}}},
      {"manifold",
       {{"newton_tol", 1e-9},
        {"max_newton_iters", 40},
        {"max_backtracks", 30},
        {"condition_limit", 1e12},
        {"T0", 1.0},
        {"T_max", 16.0},
        {"phi_tol", 1e-8}}},
  };
}

Json experiment_defaults(const std::string& name) {
  if (name == "spectrum") return {{"max", 100}};
  if (name == "gaps") return {{"max", 200}, {"rho", 1.0}, {"k", nullptr}, {"L", nullptr}, {"delta", 0.0}};
  if (name == "search-shells") return {{"k", 0.0}, {"r", 2.0}, {"rho", 1.0}, {"max", 1000}};
  if (name == "cone-check") {
    return {{"mc_samples", 1000}, {"perturbation", 0.1},  {"side", "plus"},
            {"alpha", "averaged"}, {"nodes", 3},          {"epsilon", "recipe"},
            {"assemble", true},   {"assemble_max_lambda", nullptr}};
  }
  if (name == "avg-check") return {{"k", 0.0}, {"r_values", Json::array({1.0, 2.0, 3.0, 4.0, 6.0})}};
  if (name == "build-manifold") {
    return {{"samples", 8}, {"amplitude", 0.8}, {"grid", nullptr}, {"invariance_t", 0.2}};
  }
  if (name == "track") return {{"runs", 3}, {"T_max", 3.0}, {"T_extra", 2.0}, {"burn_in", 1.0}, {"stride", 5}};
  if (name == "phi-derivative") {
    return {{"amplitude", 0.8},
            {"h", Json::array({1e-2, 1e-3, 1e-4, 1e-5})},
            {"horizon", 4.0},
            {"fd_newton_tol", 1e-13}};
  }
  return Json::object();  // simulate, validate
}

// Keys whose value replaces the default wholesale instead of merging.
const std::set<std::string> kOpaque = {"/nonlinearity/params", "/cutoff", "/params/grid"};

void merge_into(Json& base, const Json& over, const std::string& path) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key_path = path + "/" + it.key();
    if (!base.contains(it.key())) fail(ErrorKind::InvalidConfig, "unknown config key " + key_path);
    Json& slot = base[it.key()];
    if (slot.is_object() && it->is_object() && !kOpaque.count(key_path)) {
      merge_into(slot, *it, key_path);
    } else {
      slot = *it;
    }
  }
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config key '") + key + "': " + e.what());
  }
}

GridPtr grid_from(const Json& c) { return SpectralGrid::make(get<int>(c, "M")); }

NonlinearitySpec nonlinearity_from(const Json& c) {
  const Json& n = c.at("nonlinearity");
  std::map<std::string, double> params;
  if (n.contains("params") && !n.at("params").is_null()) {
    for (auto it = n.at("params").begin(); it != n.at("params").end(); ++it) params[it.key()] = it->get<double>();
  }
  return make_nonlinearity(get<std::string>(n, "name"), params);
}

std::optional<ProjectorSpec> projector_from(const Json& c, const GridPtr& grid) {
  const Json& p = c.at("projector");
  if (p.is_null()) return std::nullopt;
  return ProjectorSpec(grid, get<std::int64_t>(p, "N_index"), get<double>(p, "k"));
}

bool calibrates_r_star(const Json& c) {
  const Json& cut = c.at("cutoff");
  return !cut.is_null() && cut.at("R_star").is_string();
}

double r1_for(const Json& cut, double r_star) {
  const Json& r1 = cut.at("R_1");
  if (r1.is_string()) {
    if (r1.get<std::string>() != "auto") fail(ErrorKind::InvalidConfig, "cutoff.R_1 must be a number or \"auto\"");
    return kDefaultR1Factor * r_star;
  }
  return r1.get<double>();
}

std::optional<CutoffSpec> cutoff_from(const Json& c, std::optional<double> r_star_override = std::nullopt) {
  const Json& cut = c.at("cutoff");
  if (cut.is_null()) return std::nullopt;
  double r_star = 0.0;
  if (r_star_override) {
    r_star = *r_star_override;
  } else if (cut.at("R_star").is_string()) {
    fail(ErrorKind::InvalidConfig, "R_star = \"calibrate\" is resolved at run time");
  } else {
    r_star = cut.at("R_star").get<double>();
  }
  return CutoffSpec(r_star, r1_for(cut, r_star));
}

SolverConfig solver_base(const Json& c) {
  SolverConfig s;
  s.grid = grid_from(c);
  s.dt = get<double>(c, "dt");
  s.scheme = parse_scheme(get<std::string>(c, "scheme"));
  s.t_end = get<double>(c, "t_end");
  s.checkpoint_stride = get<int>(c, "checkpoint_stride");
  s.nonlinearity = nonlinearity_from(c);
  s.projector = projector_from(c, s.grid);
  s.modified = get<bool>(c, "modified");
  s.allow_unstable_dt = get<bool>(c, "allow_unstable_dt");
  return s;
}

ManifoldConfig manifold_with(const Json& c, SolverConfig solver) {
  ManifoldConfig m;
  m.solver = std::move(solver);
  const Json& j = c.at("manifold");
  m.newton_tol = get<double>(j, "newton_tol");
  m.max_newton_iters = get<int>(j, "max_newton_iters");
  m.max_backtracks = get<int>(j, "max_backtracks");
  m.condition_limit = get<double>(j, "condition_limit");
  m.T0 = get<double>(j, "T0");
  m.T_max = get<double>(j, "T_max");
  m.phi_tol = get<double>(j, "phi_tol");
  return m;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots, so the output does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr first_error;
  std::size_t first_error_index = n;
  auto work = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        // keep the lowest failing index so the reported error is deterministic
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct Context {
  Json config;
  std::string hash;
  fs::path out;
  int threads = 1;
  std::uint64_t seed = 0;
  std::vector<Diagnostic> warnings;

  fs::path file(const std::string& name) const { return out / name; }
  CsvWriter csv(const std::string& name, const std::vector<std::string>& columns) const {
    return CsvWriter(file(name), hash, columns);
  }
  void write_json(const std::string& name, const Json& j) const { write_text(file(name), j.dump(2) + "\n"); }
  CounterRng rng(std::uint64_t stream) const { return CounterRng(seed, stream); }
};

SpectralField initial_field(const Context& ctx, const GridPtr& grid) {
  const Json& init = ctx.config.at("initial");
  CounterRng rng = ctx.rng(kStreamInitial);
  return random_field(grid, grid->dealias_mask(), get<double>(init, "amplitude"), get<double>(init, "decay"), rng);
}

// Solver with the cut-off resolved, calibrating R_star along the original flow if asked.
SolverConfig solver_for_run(const Context& ctx, Json& summary) {
  SolverConfig s = solver_base(ctx.config);
  if (calibrates_r_star(ctx.config)) {
    const std::string mode = ctx.config.at("cutoff").at("R_star").get<std::string>();
    if (mode != "calibrate") fail(ErrorKind::InvalidConfig, "cutoff.R_star must be a number or \"calibrate\"");
    SolverConfig plain = s;
    plain.modified = false;
    const double r_star = calibrate_r_star(initial_field(ctx, s.grid), plain, 1.0, 1.0);
    summary["R_star_calibrated"] = r_star;
    s.cutoff = cutoff_from(ctx.config, r_star);
  } else {
    s.cutoff = cutoff_from(ctx.config);
  }
  if (s.cutoff) {
    summary["cutoff"] = {{"R_star", s.cutoff->r_star()}, {"R_1", s.cutoff->r_1()},
                         {"margin", s.cutoff->verify().margin}};
  }
  return s;
}

std::vector<double> coordinates_of(const RealBasis& basis, const SpectralField& u) {
  const Eigen::VectorXd c = basis.coordinates(u);
  return std::vector<double>(c.data(), c.data() + c.size());
}

// --- experiments ----------------------------------------------------------

Json run_spectrum(const Context& ctx) {
  const auto max = get<std::int64_t>(ctx.config.at("params"), "max");
  const EigenvalueTable table = enumerate_eigenvalues(max);
  CsvWriter csv = ctx.csv("spectrum.csv", {"value", "multiplicity", "first_index"});
  Json absent = Json::array();
  std::int64_t expected = 1;
  for (const auto& e : table.entries()) {
    for (; expected < e.value; ++expected) absent.push_back(expected);
    expected = e.value + 1;
    csv.row({double(e.value), double(e.multiplicity), double(e.first_index)});
  }
  for (; expected <= max; ++expected) absent.push_back(expected);
  csv.close();
  return {{"max", max}, {"distinct_values", table.entries().size()}, {"total_modes", table.total_modes()},
          {"absent_values", absent}};
}

Json run_gaps(const Context& ctx) {
  const Json& p = ctx.config.at("params");
  const auto max = get<std::int64_t>(p, "max");
  const double rho = get<double>(p, "rho");
  const double delta = get<double>(p, "delta");
  const double L = p.at("L").is_null() ? nonlinearity_from(ctx.config).L : p.at("L").get<double>();
  const double k = p.at("k").is_null() ? recommended_half_width(L, rho) : p.at("k").get<double>();
  const EigenvalueTable table = enumerate_eigenvalues(max);
  CsvWriter csv = ctx.csv("gaps.csv", {"N_index", "lambda_N", "lambda_N1", "theta", "mu", "satisfied"});
  Json satisfied = Json::array();
  for (std::int64_t n : gap_positions(table, rho)) {
    const GapReport r = evaluate_gap_condition(n, k, L, delta, table);
    csv.row({double(n), double(r.lambda_n), double(r.lambda_n1), double(r.theta), r.mu, r.satisfied ? 1.0 : 0.0});
    if (r.satisfied) satisfied.push_back(n);
  }
  csv.close();
  Json summary = {{"max", max}, {"rho", rho}, {"k", k}, {"L", L}, {"delta", delta}, {"satisfied_N_index", satisfied}};
  const Json& proj = ctx.config.at("projector");
  if (!proj.is_null()) {
    const auto n = get<std::int64_t>(proj, "N_index");
    if (n >= 1 && n < table.total_modes()) {
      const GapReport r = evaluate_gap_condition(n, k, L, delta, table);
      summary["report"] = {{"N_index", r.n_index},
                           {"lambda_N", r.lambda_n},
                           {"lambda_N1", r.lambda_n1},
                           {"theta", r.theta},
                           {"terms",
                            {{"delta", r.terms.delta},
                             {"lipschitz_shell", r.terms.lipschitz_shell},
                             {"lipschitz_quadratic", r.terms.lipschitz_quadratic},
                             {"lipschitz_low", r.terms.lipschitz_low}}},
                           {"mu", r.mu},
                           {"k_exceeds_4L", r.k_exceeds_4l},
                           {"lambda_exceeds_k", r.lambda_exceeds_k},
                           {"quadratic_prerequisite", r.quadratic_prerequisite},
                           {"lambda_exceeds_2L", r.lambda_exceeds_2l},
                           {"satisfied", r.satisfied}};
    }
  }
  return summary;
}

Json run_search_shells(const Context& ctx) {
  const Json& p = ctx.config.at("params");
  const double k = get<double>(p, "k");
  const double r = get<double>(p, "r");
  const double rho = get<double>(p, "rho");
  const auto max = get<std::int64_t>(p, "max");
  const EigenvalueTable table = enumerate_eigenvalues(max);
  std::vector<std::int64_t> values;
  for (const auto& e : table.entries()) {
    if (static_cast<double>(e.value) > k) values.push_back(e.value);
  }
  std::vector<char> separated(values.size());
  parallel_for(values.size(), ctx.threads,
               [&](std::size_t i) { separated[i] = shell_separation_holds(values[i], k, r) ? 1 : 0; });
  CsvWriter csv = ctx.csv("shells.csv", {"N_value", "k", "r", "separated"});
  for (std::size_t i = 0; i < values.size(); ++i) csv.row({double(values[i]), k, r, double(separated[i])});
  csv.close();
  Json admissible = Json::array();
  for (const auto& a : search_admissible_n(k, r, rho, max)) {
    admissible.push_back({{"N_index", a.n_index}, {"N_value", a.n_value}});
  }
  return {{"k", k}, {"r", r}, {"rho", rho}, {"max", max}, {"admissible", admissible},
          {"found", !admissible.empty()}};
}

Json run_simulate(const Context& ctx) {
  Json summary;
  SolverConfig s = solver_for_run(ctx, summary);
  const Integrator integ(s);
  SpectralField u = initial_field(ctx, s.grid);
  const SpectralField u0 = u;
  const long n = steps_for(s.t_end, s.dt);
  CsvWriter csv = ctx.csv("norms.csv", {"t", "h_minus1", "h0", "h2", "mean"});
  auto record = [&](long i) {
    const double t = static_cast<double>(i) * s.dt;
    const NormRow r = norm_row(t, u);
    csv.row({r.t, r.h_minus1, r.h0, r.h2, r.mean});
    char name[32];
    std::snprintf(name, sizeof name, "u_%08ld.bin", i);
    write_checkpoint(ctx.file(name), u, {{"t", t}, {"step", i}, {"config_hash", ctx.hash}});
  };
  record(0);
  for (long i = 1; i <= n; ++i) {
    u = integ.step(u);
    if (i % s.checkpoint_stride == 0 || i == n) record(i);
  }
  csv.close();
  summary["steps"] = n;
  summary["final"] = {{"h_minus1", h_norm(u, -1.0)}, {"h0", h_norm(u, 0.0)}, {"h2", h_norm(u, 2.0)},
                      {"mean", u.mean()}};
  if (s.nonlinearity.identically_zero && !s.modified) {
    // linear flow: compare every mode with e^{-lambda^2 t}
    double worst = 0.0;
    const Eigen::ArrayXd& lam = s.grid->eigenvalues();
    for (Index f = 1; f < lam.size(); ++f) {
      const Complex exact = u0.coeffs()(f) * std::exp(-lam(f) * lam(f) * static_cast<double>(n) * s.dt);
      if (std::abs(exact) > 0.0) worst = std::max(worst, std::abs(u.coeffs()(f) - exact) / std::abs(exact));
    }
    summary["max_rel_error_vs_exact"] = worst;
  }
  return summary;
}

Json run_cone_check(const Context& ctx, bool& regime_violation) {
  const Json& p = ctx.config.at("params");
  Json summary;
  SolverConfig s = solver_for_run(ctx, summary);
  if (!s.projector) fail(ErrorKind::InvalidConfig, "cone-check needs a projector");
  const ProjectorSpec& proj = *s.projector;
  const NonlinearitySpec& f = s.nonlinearity;
  const ConeConstants c = spectral_gap_constants(proj, f.L);
  summary["constants"] = {{"alpha_base", c.alpha_base}, {"alpha", c.alpha}, {"mu", c.mu},
                          {"lambda_N", proj.lambda_n()}, {"lambda_N1", proj.lambda_n1()}, {"L", f.L}};
  summary["certified_space"] = "dealiased modes of the M^3 grid only";
  if (!(c.mu > 0.0)) regime_violation = true;

  const SpectralField u0 = initial_field(ctx, s.grid);
  const Json& init = ctx.config.at("initial");
  const double amp = get<double>(init, "amplitude");
  const double decay = get<double>(init, "decay");

  // Monte-Carlo over (u, w)
  const int samples = get<int>(p, "mc_samples");
  std::vector<double> residuals(static_cast<std::size_t>(std::max(samples, 0)));
  const CounterRng mc = ctx.rng(kStreamMonteCarlo);
  parallel_for(residuals.size(), ctx.threads, [&](std::size_t i) {
    CounterRng r = mc.split(i);
    const SpectralField u = random_field(s.grid, s.grid->dealias_mask(), amp, decay, r);
    const SpectralField w = random_field(s.grid, s.grid->dealias_mask(), 1.0, r.uniform(0.0, 2.0), r);
    residuals[i] = strong_cone_residual(u, w, c.alpha, c.mu, f, proj);
  });
  int violations = 0;
  double max_residual = -std::numeric_limits<double>::infinity();
  for (double r : residuals) {
    if (r > 0.0) ++violations;
    max_residual = std::max(max_residual, r);
  }
  summary["monte_carlo"] = {{"samples", samples}, {"violations", violations},
                            {"max_residual", samples > 0 ? max_residual : 0.0}};
  if (violations > 0) regime_violation = true;

  if (get<bool>(p, "assemble")) {
    const double cap = p.at("assemble_max_lambda").is_null() ? double(s.grid->complete_value())
                                                             : p.at("assemble_max_lambda").get<double>();
    const Mask keep = s.grid->dealias_mask() && (s.grid->eigenvalues() <= cap);
    const RealBasis basis(s.grid, keep);
    const Eigen::MatrixXd S = assemble_strong_cone_form(u0, c.alpha, c.mu, f, proj, basis);
    summary["assembled"] = {{"dimension", basis.dimension()}, {"max_lambda", cap},
                            {"max_eigenvalue", max_eigenvalue(S)}};
  }

  // pair of trajectories
  const double pert = get<double>(p, "perturbation");
  const std::string side = get<std::string>(p, "side");
  if (side != "plus" && side != "minus") fail(ErrorKind::InvalidConfig, "params.side must be \"plus\" or \"minus\"");
  CounterRng pr = ctx.rng(kStreamPerturbation);
  const SpectralField dir = random_field(s.grid, s.grid->dealias_mask(), 1.0, 0.0, pr);
  const SpectralField v0 = u0 + pert * project(dir, proj, side == "plus" ? Projector::P_N : Projector::Q_N);

  const double alpha_upper = c.alpha + 2.0 * static_cast<double>(proj.lambda_n()) * f.L;
  double eps = 0.0;
  if (p.at("epsilon").is_string()) {
    if (p.at("epsilon").get<std::string>() != "recipe") fail(ErrorKind::InvalidConfig, "params.epsilon must be a number or \"recipe\"");
    eps = c.mu > 0.0 ? epsilon_recipe(f.L, alpha_upper, 1.0, c.mu) : 0.0;
  } else {
    eps = p.at("epsilon").get<double>();
  }
  const ConeForm form(proj, eps);
  const std::string alpha_mode = get<std::string>(p, "alpha");
  AlphaFn alpha;
  if (alpha_mode == "constant") {
    alpha = constant_alpha(c.alpha);
  } else if (alpha_mode == "averaged") {
    alpha = averaged_alpha_fn(f, proj, s.cutoff, get<int>(p, "nodes"));
  } else {
    fail(ErrorKind::InvalidConfig, "params.alpha must be \"constant\" or \"averaged\"");
  }
  const auto [a, b] = evolve_pair(v0, u0, s);
  const MonitorReport rep = monitor_cone_along(a, b, form, alpha, c.mu);
  CsvWriter csv = ctx.csv("cone.csv", {"t", "V", "V_eps", "defect", "alpha_u"});
  for (const auto& r : rep.rows) csv.row({r.t, r.V, r.V_eps, r.defect, r.alpha});
  csv.close();
  summary["monitor"] = {{"side", side},
                        {"epsilon", eps},
                        {"max_defect", rep.max_defect},
                        {"cone_exits", rep.cone_exits},
                        {"ends_outside_cone", rep.ends_outside_cone},
                        {"alpha_minus", rep.alpha_minus},
                        {"alpha_plus", rep.alpha_plus},
                        {"fitted_rate", rep.fitted_rate},
                        {"predicted_rate", rep.predicted_rate}};
  summary["regime_violation"] = regime_violation;
  return summary;
}

Json run_avg_check(const Context& ctx) {
  const Json& p = ctx.config.at("params");
  const GridPtr grid = grid_from(ctx.config);
  const NonlinearitySpec f = nonlinearity_from(ctx.config);
  const SpectralField u = initial_field(ctx, grid);
  const double k = get<double>(p, "k");
  Json summary = {{"a", spatial_average_a(u, f)}, {"k", k}};

  if (const auto proj = projector_from(ctx.config, grid)) {
    const AveragingResidual r = spatial_averaging_residual(u, f, *proj);
    summary["projector"] = {{"N_index", proj->n_index()}, {"lambda_N", proj->lambda_n()}, {"k", proj->k()},
                            {"norm", r.norm}, {"shell_modes", r.shell_modes},
                            {"crude_bound", 2.0 * f.L * std::sqrt(double(r.shell_modes))}};
  }

  const EigenvalueTable table = enumerate_eigenvalues(grid->complete_value());
  CsvWriter csv = ctx.csv("avg.csv", {"r", "N_value", "N_index", "shell_modes", "norm", "a"});
  std::vector<double> rs, norms;
  Json missing = Json::array();
  for (const Json& rj : p.at("r_values")) {
    const double r = rj.get<double>();
    bool found = false;
    for (const auto& e : table.entries()) {
      if (e.value >= grid->complete_value() || static_cast<double>(e.value) + k > double(grid->complete_value())) break;
      if (static_cast<double>(e.value) <= k || !shell_separation_holds(e.value, k, r)) continue;
      const ProjectorSpec proj(grid, e.last_index(), k);
      const AveragingResidual res = spatial_averaging_residual(u, f, proj);
      csv.row({r, double(e.value), double(e.last_index()), double(res.shell_modes), res.norm, res.a});
      rs.push_back(r);
      norms.push_back(res.norm);
      found = true;
      break;
    }
    if (!found) missing.push_back(r);
  }
  csv.close();
  summary["r_without_shell"] = missing;
  bool positive = norms.size() >= 2;
  for (double n : norms) positive = positive && n > 0.0;
  if (positive) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = double(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const double lx = std::log(rs[i]), ly = std::log(norms[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    summary["r_sweep_slope"] = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  } else {
    summary["r_sweep_slope"] = nullptr;
  }
  return summary;
}

Json run_build_manifold(const Context& ctx) {
  const Json& p = ctx.config.at("params");
  Json summary;
  const ManifoldConfig mc = manifold_with(ctx.config, solver_for_run(ctx, summary));
  if (!mc.solver.projector) fail(ErrorKind::InvalidConfig, "build-manifold needs a projector");
  const ProjectorSpec& proj = *mc.solver.projector;
  const RealBasis basis(mc.solver.grid, proj.mask(Projector::P_N));

  std::vector<SpectralField> points;
  if (!p.at("grid").is_null()) {
    const int n = get<int>(p.at("grid"), "points");
    const double radius = get<double>(p.at("grid"), "radius");
    if (n < 2 || basis.dimension() < 2) fail(ErrorKind::InvalidConfig, "params.grid needs points >= 2 and dim H_+ >= 2");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(basis.dimension());
        y(0) = -radius + 2.0 * radius * i / (n - 1);
        y(1) = -radius + 2.0 * radius * j / (n - 1);
        points.push_back(basis.field(y));
      }
    }
  } else {
    const int n = get<int>(p, "samples");
    const double amp = get<double>(p, "amplitude");
    const CounterRng base = ctx.rng(kStreamSamples);
    for (int i = 0; i < n; ++i) {
      CounterRng r = base.split(std::uint64_t(i));
      points.push_back(random_field(mc.solver.grid, proj.mask(Projector::P_N), amp, 0.0, r));
    }
  }

  std::vector<ManifoldSample> samples(points.size());
  parallel_for(points.size(), ctx.threads, [&](std::size_t i) { samples[i] = phi_of(points[i], mc); });

  std::vector<std::string> columns = {"sample"};
  for (Index i = 0; i < basis.dimension(); ++i) columns.push_back("y" + std::to_string(i));
  for (const char* c : {"phi_h_minus1", "phi_h0", "phi_h2", "T_used", "cauchy_gap", "rate_fit", "residual",
                        "newton_iters", "jacobian_cond"}) {
    columns.push_back(c);
  }
  CsvWriter csv = ctx.csv("samples.csv", columns);
  double max_gap_ratio = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ManifoldSample& s = samples[i];
    std::vector<double> row = {double(i)};
    for (double y : coordinates_of(basis, s.u_plus)) row.push_back(y);
    for (double v : {h_norm(s.phi, -1.0), h_norm(s.phi, 0.0), h_norm(s.phi, 2.0), s.T_used, s.cauchy_gap,
                     s.rate_fit, s.residual, double(s.newton_iters), s.jacobian_cond}) {
      row.push_back(v);
    }
    csv.row(row);
    for (std::size_t k = 1; k < s.gaps.size(); ++k) {
      if (s.gaps[k - 1] > 0.0) max_gap_ratio = std::max(max_gap_ratio, s.gaps[k] / s.gaps[k - 1]);
    }
  }
  csv.close();

  double max_ratio = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double du = h_norm(samples[i].u_plus - samples[j].u_plus, -1.0);
      if (du == 0.0) continue;
      max_ratio = std::max(max_ratio, h_norm(samples[i].phi - samples[j].phi, -1.0) / du);
      ++pairs;
    }
  }
  summary["samples"] = samples.size();
  summary["pairs"] = pairs;
  summary["max_lipschitz_ratio_h_minus1"] = max_ratio;
  summary["max_doubling_gap_ratio"] = max_gap_ratio;
  summary["tolerances"] = {{"newton_tol", mc.newton_tol}, {"phi_tol", mc.phi_tol}};
  const double t_probe = get<double>(p, "invariance_t");
  if (t_probe > 0.0 && !samples.empty()) {
    summary["invariance_defect"] = manifold_invariance_check(samples[0], t_probe, mc);
    summary["invariance_t"] = t_probe;
  }
  return summary;
}

Json run_track(const Context& ctx) {
  const Json& p = ctx.config.at("params");
  Json summary;
  const ManifoldConfig mc = manifold_with(ctx.config, solver_for_run(ctx, summary));
  const int runs = get<int>(p, "runs");
  const double T_max = get<double>(p, "T_max");
  const double T_extra = get<double>(p, "T_extra");
  const double burn_in = get<double>(p, "burn_in");
  const int stride = get<int>(p, "stride");
  const Json& init = ctx.config.at("initial");
  const double amp = get<double>(init, "amplitude");
  const double decay = get<double>(init, "decay");

  std::vector<TrackingReport> reports(static_cast<std::size_t>(std::max(runs, 0)));
  const CounterRng base = ctx.rng(kStreamTracking);
  parallel_for(reports.size(), ctx.threads, [&](std::size_t i) {
    CounterRng r = base.split(i);
    const SpectralField u0 = random_field(mc.solver.grid, mc.solver.grid->dealias_mask(), amp, decay, r);
    reports[i] = tracking_experiment(u0, mc, T_max, T_extra, burn_in, stride);
  });
  CsvWriter csv = ctx.csv("tracking.csv", {"run", "t", "distance_h_minus1"});
  Json per_run = Json::array();
  double min_rate = std::numeric_limits<double>::infinity();
  bool endpoints = true;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const TrackingReport& r = reports[i];
    for (std::size_t k = 0; k < r.times.size(); ++k) csv.row({double(i), r.times[k], r.distance[k]});
    per_run.push_back({{"fitted_rate", r.fitted_rate}, {"fitted_points", r.fitted_points},
                       {"noise_floor", r.noise_floor}, {"bvp_residual", r.bvp_residual},
                       {"endpoint_ok", r.endpoint_ok}});
    min_rate = std::min(min_rate, r.fitted_rate);
    endpoints = endpoints && r.endpoint_ok;
  }
  csv.close();
  summary["runs"] = per_run;
  summary["min_fitted_rate"] = reports.empty() ? 0.0 : min_rate;
  summary["all_endpoints_ok"] = endpoints;
  if (mc.solver.projector) {
    const double l1 = double(mc.solver.projector->lambda_n1());
    summary["lambda_N1_squared"] = l1 * l1;
  }
  return summary;
}

Json run_phi_derivative(const Context& ctx) {
  const Json& p = ctx.config.at("params");
  Json summary;
  ManifoldConfig mc = manifold_with(ctx.config, solver_for_run(ctx, summary));
  if (!mc.solver.projector) fail(ErrorKind::InvalidConfig, "phi-derivative needs a projector");
  const ProjectorSpec& proj = *mc.solver.projector;
  const double amp = get<double>(p, "amplitude");
  CounterRng r = ctx.rng(kStreamDerivative);
  const SpectralField up = random_field(mc.solver.grid, proj.mask(Projector::P_N), amp, 0.0, r);
  const SpectralField w1 = random_field(mc.solver.grid, proj.mask(Projector::P_N), 1.0, 0.0, r);
  const SpectralField w2 = random_field(mc.solver.grid, proj.mask(Projector::P_N), 1.0, 0.0, r);

  const DerivativeResult limit = phi_derivative(up, w1, mc);
  summary["limit"] = {{"T_used", limit.T_used}, {"cauchy_gap", limit.cauchy_gap},
                      {"norm_h_minus1", h_norm(limit.value, -1.0)}};

  // finite differences at a fixed horizon, with a tight Newton tolerance
  ManifoldConfig fd = mc;
  fd.newton_tol = get<double>(p, "fd_newton_tol");
  const double T = get<double>(p, "horizon");
  const BvpResult base = solve_bvp(up, T, fd);
  const SpectralField d1 = phi_derivative_at(base, w1);
  const SpectralField d2 = phi_derivative_at(base, w2);
  const SpectralField d12 = phi_derivative_at(base, 2.0 * w1 - 3.0 * w2);
  const double lin_err = h_norm(d12 - (2.0 * d1 - 3.0 * d2), -1.0) / std::max(h_norm(d12, -1.0), 1e-300);
  const SpectralField phi0 = project(base.u_final, proj, Projector::Q_N);

  CsvWriter csv = ctx.csv("derivative.csv", {"h", "remainder_h_minus1"});
  std::vector<double> hs, rem;
  for (const Json& hj : p.at("h")) {
    const double h = hj.get<double>();
    const BvpResult bh = solve_bvp(up + h * w1, T, fd, &base.y);
    const double e = h_norm(project(bh.u_final, proj, Projector::Q_N) - phi0 - h * d1, -1.0);
    csv.row({h, e});
    hs.push_back(h);
    rem.push_back(e);
  }
  csv.close();
  double exponent = std::numeric_limits<double>::quiet_NaN();
  if (hs.size() >= 2 && std::all_of(rem.begin(), rem.end(), [](double x) { return x > 0.0; })) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = double(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const double lx = std::log(hs[i]), ly = std::log(rem[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  summary["horizon"] = T;
  summary["fd_exponent"] = exponent;
  summary["linearity_rel_error"] = lin_err;
  return summary;
}

// Short form for messages; data files use format_double.
std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Json diagnostics_json(const std::vector<Diagnostic>& diags) {
  Json out = Json::array();
  for (const auto& d : diags) out.push_back({{"severity", d.error ? "error" : "warning"}, {"message", d.message}});
  return out;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

Json resolve_config(const Json& user) {
  if (!user.is_object()) fail(ErrorKind::InvalidConfig, "config must be a JSON object");
  if (!user.contains("experiment") || !user.at("experiment").is_string()) {
    fail(ErrorKind::InvalidConfig, "config needs an \"experiment\" name");
  }
  const std::string name = user.at("experiment").get<std::string>();
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    fail(ErrorKind::InvalidConfig, "unknown experiment '" + name + "'");
  }
  Json resolved = base_defaults();
  resolved["params"] = experiment_defaults(name);
  merge_into(resolved, user, "");
  return resolved;
}

void apply_env_overrides(Json& config, const std::function<const char*(const char*)>& lookup) {
  const Json defaults = base_defaults();
  for (const auto& [key, value] : defaults.items()) {
    if (value.is_object() || value.is_null() || key == "experiment") continue;
    std::string env = "IMCH_";
    for (char ch : key) env += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const char* raw = lookup(env.c_str());
    if (!raw) continue;
    Json parsed = Json::parse(raw, nullptr, false);
    config[key] = parsed.is_discarded() ? Json(std::string(raw)) : parsed;
  }
}

std::vector<Diagnostic> validate(const Json& user) {
  std::vector<Diagnostic> out;
  auto error = [&](const std::string& m) { out.push_back({true, m}); };
  auto warn = [&](const std::string& m) { out.push_back({false, m}); };

  Json c;
  try {
    c = resolve_config(user);
  } catch (const std::exception& e) {
    error(e.what());
    return out;
  }
  const std::string exp = c.at("experiment").get<std::string>();
  // lattice-only experiments do not touch the grid or the solver
  const bool lattice_only = exp == "spectrum" || exp == "gaps" || exp == "search-shells";

  auto attempt = [&](auto&& fn) {
    try {
      fn();
      return true;
    } catch (const nlohmann::json::exception& e) {
      error(e.what());
    } catch (const std::exception& e) {
      error(e.what());
    }
    return false;
  };

  GridPtr grid;
  NonlinearitySpec f;
  std::optional<ProjectorSpec> proj;
  bool ok = attempt([&] { grid = grid_from(c); });
  ok = attempt([&] { f = nonlinearity_from(c); }) && ok;
  if (grid) ok = attempt([&] { proj = projector_from(c, grid); }) && ok;

  if (lattice_only) {
    attempt([&] {
      const Json& p = c.at("params");
      if (p.contains("max") && p.at("max").get<std::int64_t>() < 1) error("params.max must be >= 1");
      if (exp == "search-shells" && p.at("r").get<double>() <= 0.0) error("params.r must be positive");
    });
    return out;
  }

  attempt([&] {
    const double dt = get<double>(c, "dt");
    const double t_end = get<double>(c, "t_end");
    if (!(dt > 0.0)) {
      error("dt must be positive");
    } else {
      if (!(t_end >= 0.0)) error("t_end must be >= 0");
      else if (exp == "simulate" || exp == "cone-check") steps_for(t_end, dt);
      if (grid) {
        const double limit = stable_dt_limit(*grid, f.L);
        if (dt > limit) {
          const std::string m = "dt=" + brief(dt) + " exceeds 1/(2 L lambda_max) = " + brief(limit);
          if (get<bool>(c, "allow_unstable_dt")) warn(m);
          else error(m + " (set allow_unstable_dt to override)");
        }
      }
    }
    parse_scheme(get<std::string>(c, "scheme"));
    if (get<int>(c, "checkpoint_stride") < 1) error("checkpoint_stride must be >= 1");
  });

  if (proj) {
    const double k = proj->k();
    if (k > 0.0 && k <= 4.0 * f.L) {
      warn("projector.k = " + brief(k) + " <= 4L = " + brief(4.0 * f.L) +
           ": the spatial averaging estimate requires k > 4L");
    }
    const bool needs_gap = exp == "cone-check" || exp == "build-manifold" || exp == "track" || exp == "phi-derivative";
    if (needs_gap && static_cast<double>(proj->theta()) <= f.L) {
      warn("lambda_{N+1} - lambda_N = " + std::to_string(proj->theta()) + " <= L = " + brief(f.L) +
           ": outside the spectral-gap regime");
    }
  } else if (exp == "cone-check" || exp == "build-manifold" || exp == "track" || exp == "phi-derivative") {
    error(exp + " needs a projector");
  }

  attempt([&] {
    const Json& cut = c.at("cutoff");
    if (cut.is_null()) {
      if (get<bool>(c, "modified")) error("modified = true needs a cutoff and a projector");
      return;
    }
    if (!cut.is_object() || !cut.contains("R_star") || !cut.contains("R_1")) {
      error("cutoff must be {\"R_star\": number|\"calibrate\", \"R_1\": number|\"auto\"}");
      return;
    }
    if (cut.at("R_star").is_string()) {
      if (cut.at("R_star").get<std::string>() != "calibrate") error("cutoff.R_star must be a number or \"calibrate\"");
      if (!cut.at("R_1").is_string()) warn("R_1 is fixed while R_star is calibrated; R_1 >= 4 R_star is checked at run time");
      return;
    }
    const double r_star = cut.at("R_star").get<double>();
    const double r_1 = r1_for(cut, r_star);
    if (r_1 < 4.0 * r_star) {
      error("R_1 = " + brief(r_1) + " < 4 R_star = " + brief(4.0 * r_star) +
            ": the cut-off requires R_1 >= 4 R_star");
      return;
    }
    CutoffSpec(r_star, r_1);
  });

  attempt([&] {
    const Json& p = c.at("params");
    auto positive_int = [&](const char* key) {
      if (p.contains(key) && p.at(key).get<int>() < 1) error(std::string("params.") + key + " must be >= 1");
    };
    positive_int("samples");
    positive_int("runs");
    positive_int("stride");
    positive_int("nodes");
    if (exp == "cone-check" && p.at("mc_samples").get<int>() < 0) error("params.mc_samples must be >= 0");
    if (exp == "track" && p.at("T_max").get<double>() <= 0.0) error("params.T_max must be positive");
    if (exp == "phi-derivative" && p.at("h").empty()) error("params.h must list step sizes");
    const Json& m = c.at("manifold");
    if (!(m.at("newton_tol").get<double>() > 0.0) || !(m.at("phi_tol").get<double>() > 0.0)) {
      error("manifold tolerances must be positive");
    }
    if (!(m.at("T0").get<double>() > 0.0) || m.at("T_max").get<double>() < m.at("T0").get<double>()) {
      error("manifold needs 0 < T0 <= T_max");
    }
  });
  (void)ok;
  return out;
}

SolverConfig solver_from(const Json& config) {
  SolverConfig s = solver_base(config);
  s.cutoff = cutoff_from(config);
  return s;
}

ManifoldConfig manifold_from(const Json& config) { return manifold_with(config, solver_from(config)); }

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidArgument:
      return 2;
    case ErrorKind::RegimeViolation:
    case ErrorKind::NewtonDiverged:
    case ErrorKind::JacobianSingular:
    case ErrorKind::NoConvergence:
      return 3;
    case ErrorKind::NumericFailure:
    case ErrorKind::StepRejected:
      return 4;
    case ErrorKind::Io:
      return 1;
  }
  return 1;
}

RunResult run_experiment(const Json& user, const RunOptions& options) {
  RunResult result;
  const auto started = std::chrono::steady_clock::now();
  Context ctx;
  ctx.out = options.out;
  ctx.threads = std::max(options.threads, 1);

  auto finish_failed = [&](int code, const std::string& kind, const std::string& message) {
    result.exit_code = code;
    result.message = kind + ": " + message;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (!ec) {
      try {
        write_text(ctx.file("FAILED"), result.message + "\n");
      } catch (...) {
      }
    }
    return result;
  };

  try {
    ctx.config = resolve_config(user);
  } catch (const Error& e) {
    return finish_failed(exit_code_for(e.kind()), to_string(e.kind()), e.what());
  }
  ctx.hash = config_hash(ctx.config);
  ctx.seed = ctx.config.at("seed").get<std::uint64_t>();
  result.diagnostics = validate(ctx.config);
  for (const auto& d : result.diagnostics) {
    if (!d.error) ctx.warnings.push_back(d);
  }
  const std::string exp = ctx.config.at("experiment").get<std::string>();

  try {
    fs::create_directories(ctx.out);
    const fs::path cfg_path = ctx.file("config.json");
    if (fs::exists(cfg_path)) {
      const Json previous = Json::parse(read_text(cfg_path), nullptr, false);
      if (previous.is_discarded() || previous.value("config_hash", "") != ctx.hash) {
        fail(ErrorKind::InvalidConfig,
             "output directory " + ctx.out.string() + " holds a different run; choose another --out");
      }
    }
    fs::remove(ctx.file("FAILED"));
    ctx.write_json("config.json", {{"config", ctx.config}, {"config_hash", ctx.hash}});

    const bool has_errors = std::any_of(result.diagnostics.begin(), result.diagnostics.end(),
                                        [](const Diagnostic& d) { return d.error; });
    if (exp == "validate" || has_errors) {
      ctx.write_json("diagnostics.json", diagnostics_json(result.diagnostics));
      if (has_errors) {
        std::string first;
        for (const auto& d : result.diagnostics) {
          if (d.error) {
            first = d.message;
            break;
          }
        }
        return finish_failed(2, "invalid-config", first);
      }
      result.summary = {{"diagnostics", diagnostics_json(result.diagnostics)}};
    } else {
      bool regime_violation = false;
      if (exp == "spectrum") result.summary = run_spectrum(ctx);
      else if (exp == "gaps") result.summary = run_gaps(ctx);
      else if (exp == "search-shells") result.summary = run_search_shells(ctx);
      else if (exp == "simulate") result.summary = run_simulate(ctx);
      else if (exp == "cone-check") result.summary = run_cone_check(ctx, regime_violation);
      else if (exp == "avg-check") result.summary = run_avg_check(ctx);
      else if (exp == "build-manifold") result.summary = run_build_manifold(ctx);
      else if (exp == "track") result.summary = run_track(ctx);
      else if (exp == "phi-derivative") result.summary = run_phi_derivative(ctx);
      result.summary["config_hash"] = ctx.hash;
      result.summary["warnings"] = diagnostics_json(ctx.warnings);
      ctx.write_json("summary.json", result.summary);
      if (regime_violation) {
        return finish_failed(3, "regime-violation", "cone checks failed; see summary.json");
      }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    ctx.write_json("run.json", {{"finished", timestamp()}, {"seconds", seconds}, {"threads", ctx.threads},
                                {"config_hash", ctx.hash}});
  } catch (const Error& e) {
    return finish_failed(exit_code_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return finish_failed(2, "invalid-config", e.what());
  } catch (const fs::filesystem_error& e) {
    return finish_failed(1, "io", e.what());
  } catch (const std::exception& e) {
    return finish_failed(1, "error", e.what());
  }
  return result;
}

ReplayReport replay(const fs::path& dir, int threads) {
  ReplayReport rep;
  const Json stored = Json::parse(read_text(dir / "config.json"), nullptr, false);
  if (stored.is_discarded() || !stored.contains("config")) {
    fail(ErrorKind::InvalidConfig, (dir / "config.json").string() + " is not a run config");
  }
  const std::string hash = stored.value("config_hash", "");
  if (config_hash(stored.at("config")) != hash) {
    rep.mismatches.push_back("config.json (stored hash does not match its config)");
  }
  const fs::path scratch = fs::temp_directory_path() / ("imch-replay-" + hash + "-" +
                                                        std::to_string(std::hash<std::string>{}(dir.string())));
  fs::remove_all(scratch);
  const RunResult again = run_experiment(stored.at("config"), {scratch, threads});
  rep.exit_code = again.exit_code;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path().filename());
  }
  std::sort(files.begin(), files.end());
  for (const auto& name : files) {
    if (name == "run.json") continue;
    rep.compared.push_back(name.string());
    const fs::path other = scratch / name;
    if (!fs::exists(other)) {
      rep.mismatches.push_back(name.string() + " (missing on replay)");
      continue;
    }
    if (read_text(dir / name) != read_text(other)) rep.mismatches.push_back(name.string());
  }
  for (const auto& entry : fs::directory_iterator(scratch)) {
    const fs::path name = entry.path().filename();
    if (name != "run.json" && !fs::exists(dir / name)) rep.mismatches.push_back(name.string() + " (new on replay)");
  }
  fs::remove_all(scratch);
  rep.identical = rep.mismatches.empty();
  return rep;
}

}  // namespace imch

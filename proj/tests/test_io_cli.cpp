#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "imch/experiment.hpp"
#include "imch/rng.hpp"
#include "oracles.hpp"

using namespace imch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("imch-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Table {
  std::string comment;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_csv(const fs::path& p) {
  std::istringstream in(read_text(p));
  Table t;
  std::string line;
  std::getline(in, t.comment);
  std::getline(in, line);
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream rs(line);
    for (std::string cell; std::getline(rs, cell, ',');) row.push_back(std::stod(cell));
    t.rows.push_back(row);
  }
  return t;
}

bool has(const std::vector<Diagnostic>& d, bool error, const std::string& needle) {
  for (const auto& x : d) {
    if (x.error == error && x.message.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("checkpoint round trip and layout") {
  TempDir dir("ckpt");
  fs::create_directories(dir.path);
  const auto g = SpectralGrid::make(8);
  CounterRng rng(11);
  const SpectralField u = random_field(g, g->dealias_mask(), 1.0, 1.0, rng);
  write_checkpoint(dir.path / "u.bin", u, {{"t", 0.5}});
  const SpectralField v = read_checkpoint(dir.path / "u.bin");
  CHECK(v.coeffs() == u.coeffs());

  const std::string bytes = read_text(dir.path / "u.bin");
  CHECK(bytes.substr(0, 4) == "IMCH");
  CHECK(bytes.size() == 12 + 8 * 8 * 8 * 16);
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[8]) == 8);
  const Json meta = Json::parse(read_text(dir.path / "u.bin.json"));
  CHECK(meta.at("t") == 0.5);

  write_text(dir.path / "short.bin", bytes.substr(0, 40));
  CHECK_THROWS_AS(read_checkpoint(dir.path / "short.bin"), Error);
  CHECK_THROWS_AS(read_checkpoint(dir.path / "missing.bin"), Error);
}

TEST_CASE("CSV carries the hash and round-trips doubles") {
  TempDir dir("csv");
  fs::create_directories(dir.path);
  {
    CsvWriter w(dir.path / "a.csv", "abc", {"x", "y"});
    w.row({0.1, 1.0 / 3.0});
    CHECK_THROWS_AS(w.row({1.0}), Error);
    w.close();
  }
  const Table t = read_csv(dir.path / "a.csv");
  CHECK(t.comment == "# config_hash=abc");
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == 0.1);
  CHECK(t.rows[0][1] == 1.0 / 3.0);
}

TEST_CASE("config hash ignores key order and sees every value") {
  const Json a = Json::parse(R"({"M": 16, "dt": 0.01, "nonlinearity": {"name": "zero"}})");
  const Json b = Json::parse(R"({"nonlinearity": {"name": "zero"}, "dt": 0.01, "M": 16})");
  CHECK(config_hash(a) == config_hash(b));
  Json c = a;
  c["dt"] = 0.02;
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(Json::object()) != config_hash(Json::array()));
  // FNV-1a 64 of the two bytes "{}"
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : std::string("{}")) h = (h ^ ch) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  CHECK(config_hash(Json::object()) == buf);
}

TEST_CASE("resolve_config fills defaults and rejects unknown keys") {
  const Json r = resolve_config({{"experiment", "simulate"}, {"M", 8}});
  CHECK(r.at("M") == 8);
  CHECK(r.at("scheme") == "ETDRK2");
  CHECK(r.at("nonlinearity").at("name") == "sine");
  const Json s = resolve_config({{"experiment", "simulate"},
                                 {"nonlinearity", {{"name", "saturated-cubic"}, {"params", {{"U_max", 2.0}}}}}});
  CHECK(s.at("nonlinearity").at("params").size() == 1);  // params replaced, not merged

  auto kind = [](const Json& j) {
    try {
      resolve_config(j);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind({{"experiment", "simulate"}, {"typo", 1}}) == ErrorKind::InvalidConfig);
  CHECK(kind({{"experiment", "simulate"}, {"manifold", {{"newton", 1}}}}) == ErrorKind::InvalidConfig);
  CHECK(kind({{"experiment", "nope"}}) == ErrorKind::InvalidConfig);
  CHECK(kind(Json::object()) == ErrorKind::InvalidConfig);
}

TEST_CASE("validate diagnostics") {
  SUBCASE("well-formed configs give no diagnostics") {
    for (const auto& name : experiment_names()) {
      const auto d = validate({{"experiment", name}});
      CHECK_MESSAGE(d.empty(), name);
    }
  }
  SUBCASE("k <= 4L is flagged") {
    const auto d = validate({{"experiment", "avg-check"}, {"projector", {{"N_index", 6}, {"k", 0.3}}}});
    CHECK(has(d, false, "k > 4L"));
    const auto ok = validate({{"experiment", "avg-check"}, {"projector", {{"N_index", 32}, {"k", 0.5}}}});
    CHECK_FALSE(has(ok, false, "k > 4L"));
  }
  SUBCASE("R_1 < 4 R_star is an error") {
    const auto d = validate({{"experiment", "simulate"}, {"cutoff", {{"R_star", 1.0}, {"R_1", 3.9}}}});
    CHECK(has(d, true, "R_1 >= 4 R_star"));
    // between 4 R_star and the margin threshold the constructor itself refuses
    const auto m = validate({{"experiment", "simulate"}, {"cutoff", {{"R_star", 1.0}, {"R_1", 4.1}}}});
    CHECK_FALSE(has(m, true, "R_1 >= 4 R_star"));
    CHECK(std::any_of(m.begin(), m.end(), [](const Diagnostic& x) { return x.error; }));
    CHECK(validate({{"experiment", "simulate"}, {"cutoff", {{"R_star", 1.0}, {"R_1", "auto"}}}}).empty());
  }
  SUBCASE("dt stability") {
    CHECK(has(validate({{"experiment", "simulate"}, {"dt", 0.1}}), true, "1/(2 L lambda_max)"));
    const auto d = validate({{"experiment", "simulate"}, {"dt", 0.1}, {"t_end", 1.0}, {"allow_unstable_dt", true}});
    CHECK(has(d, false, "1/(2 L lambda_max)"));
    CHECK_FALSE(has(d, true, "1/(2 L lambda_max)"));
    CHECK(has(validate({{"experiment", "simulate"}, {"dt", -1.0}}), true, "dt must be positive"));
  }
  SUBCASE("structural errors") {
    CHECK(has(validate({{"experiment", "simulate"}, {"M", 7}}), true, ""));
    CHECK(has(validate({{"experiment", "simulate"}, {"modified", true}}), true, "needs a cutoff"));
    CHECK(has(validate({{"experiment", "track"}, {"projector", nullptr}}), true, "needs a projector"));
    CHECK(has(validate({{"experiment", "simulate"}, {"M", "sixteen"}}), true, ""));
    CHECK(has(validate({{"experiment", "simulate"}, {"nonlinearity", {{"name", "cubic"}}}}), true, ""));
  }
  SUBCASE("gap regime warning for manifold experiments") {
    const Json big_l = {{"experiment", "build-manifold"},
                        {"nonlinearity", {{"name", "sine"}, {"params", {{"amplitude", 2.0}}}}},
                        {"dt", 0.001}};
    CHECK(has(validate(big_l), false, "spectral-gap regime"));
  }
}

TEST_CASE("environment overrides") {
  std::map<std::string, std::string> env = {{"IMCH_SEED", "42"}, {"IMCH_SCHEME", "ETD1"}, {"IMCH_DT", "0.005"}};
  auto lookup = [&](const char* k) -> const char* {
    auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  Json c = {{"experiment", "simulate"}, {"seed", 1}};
  apply_env_overrides(c, lookup);
  CHECK(c.at("seed") == 42);
  CHECK(c.at("scheme") == "ETD1");
  CHECK(c.at("dt") == 0.005);
  CHECK(c.at("experiment") == "simulate");
  CHECK_FALSE(c.contains("nonlinearity"));
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorKind::InvalidConfig) == 2);
  CHECK(exit_code_for(ErrorKind::InvalidArgument) == 2);
  CHECK(exit_code_for(ErrorKind::RegimeViolation) == 3);
  CHECK(exit_code_for(ErrorKind::NewtonDiverged) == 3);
  CHECK(exit_code_for(ErrorKind::NoConvergence) == 3);
  CHECK(exit_code_for(ErrorKind::NumericFailure) == 4);
  CHECK(exit_code_for(ErrorKind::StepRejected) == 4);
  CHECK(exit_code_for(ErrorKind::Io) == 1);

  TempDir dir("exit");
  const RunResult bad = run_experiment({{"experiment", "simulate"}, {"dt", 1.0}}, {dir.path});
  CHECK(bad.exit_code == 2);
  CHECK(fs::exists(dir.path / "FAILED"));
  CHECK(fs::exists(dir.path / "diagnostics.json"));
  CHECK_FALSE(fs::exists(dir.path / "summary.json"));

  // a different config may not reuse the directory
  const RunResult clash = run_experiment({{"experiment", "simulate"}, {"dt", 0.5}}, {dir.path});
  CHECK(clash.exit_code == 2);
  CHECK(clash.message.find("different run") != std::string::npos);

  // blow-up with an explicitly allowed unstable step is a numeric failure
  TempDir blow("blowup");
  const Json unstable = {{"experiment", "simulate"},
                         {"nonlinearity", {{"name", "sine"}, {"params", {{"amplitude", 1e4}}}}},
                         {"dt", 0.5},
                         {"t_end", 50.0},
                         {"allow_unstable_dt", true}};
  const RunResult r = run_experiment(unstable, {blow.path});
  CHECK(r.exit_code == 4);
  CHECK(fs::exists(blow.path / "FAILED"));
}

TEST_CASE("spectrum experiment lists the absent values") {
  TempDir dir("spectrum");
  const RunResult r = run_experiment({{"experiment", "spectrum"}, {"params", {{"max", 100}}}}, {dir.path});
  REQUIRE(r.exit_code == 0);
  std::vector<std::int64_t> absent;
  for (std::int64_t v = 1; v <= 100; ++v) {
    if (!oracle::three_squares_criterion(v)) absent.push_back(v);
  }
  CHECK(r.summary.at("absent_values").get<std::vector<std::int64_t>>() == absent);
  for (std::int64_t v : {7, 15, 23, 28, 31, 39}) {
    CHECK(std::find(absent.begin(), absent.end(), v) != absent.end());
  }
  const Table t = read_csv(dir.path / "spectrum.csv");
  CHECK(t.header == std::vector<std::string>{"value", "multiplicity", "first_index"});
  CHECK(t.comment == "# config_hash=" + r.summary.at("config_hash").get<std::string>());
  std::int64_t index = 1;
  for (const auto& row : t.rows) {
    const auto v = static_cast<std::int64_t>(row[0]);
    CHECK(row[1] == oracle::brute_multiplicity(v));
    CHECK(row[2] == index);
    index += static_cast<std::int64_t>(row[1]);
  }
  CHECK(t.rows.size() + absent.size() == 100);
}

TEST_CASE("simulate with F = 0 decays exactly") {
  TempDir dir("simulate");
  const Json cfg = {{"experiment", "simulate"},
                    {"nonlinearity", {{"name", "zero"}, {"params", Json::object()}}},
                    {"dt", 0.001},
                    {"t_end", 0.2},
                    {"checkpoint_stride", 20}};
  const RunResult r = run_experiment(cfg, {dir.path});
  REQUIRE(r.exit_code == 0);
  CHECK(r.summary.at("max_rel_error_vs_exact").get<double>() < 1e-12);

  const SpectralField u0 = read_checkpoint(dir.path / "u_00000000.bin");
  const Eigen::ArrayXd& lam = u0.grid()->eigenvalues();
  const Table t = read_csv(dir.path / "norms.csv");
  REQUIRE(t.rows.size() == 11);
  for (const auto& row : t.rows) {
    const double time = row[0];
    double h = 0.0;
    for (Index f = 1; f < lam.size(); ++f) {
      h += std::norm(u0.coeffs()(f)) * std::exp(-2.0 * lam(f) * lam(f) * time) / lam(f);
    }
    CHECK(row[1] == doctest::Approx(std::sqrt(h)).epsilon(1e-12));
    CHECK(row[4] == 0.0);
  }
  const SpectralField last = read_checkpoint(dir.path / "u_00000200.bin");
  CHECK(last.mean() == 0.0);
}

TEST_CASE("replay reproduces every data file") {
  TempDir dir("replay");
  const Json cfg = {{"experiment", "cone-check"}, {"t_end", 0.2}, {"params", {{"mc_samples", 50}}}};
  const RunResult r = run_experiment(cfg, {dir.path, 2});
  REQUIRE(r.exit_code == 0);
  const ReplayReport rep = replay(dir.path, 1);
  CHECK(rep.identical);
  CHECK(rep.mismatches.empty());
  CHECK(std::find(rep.compared.begin(), rep.compared.end(), "cone.csv") != rep.compared.end());
  CHECK(std::find(rep.compared.begin(), rep.compared.end(), "run.json") == rep.compared.end());

  // tampering is detected
  std::ofstream(dir.path / "cone.csv", std::ios::app) << "0,0,0,0,0\n";
  const ReplayReport tampered = replay(dir.path, 1);
  CHECK_FALSE(tampered.identical);
  CHECK(tampered.mismatches == std::vector<std::string>{"cone.csv"});
}

TEST_CASE("a different seed changes the data") {
  TempDir a("seed-a"), b("seed-b");
  const Json base = {{"experiment", "simulate"}, {"t_end", 0.05}};
  Json other = base;
  other["seed"] = 2;
  REQUIRE(run_experiment(base, {a.path}).exit_code == 0);
  REQUIRE(run_experiment(other, {b.path}).exit_code == 0);
  CHECK(read_text(a.path / "u_00000000.bin") != read_text(b.path / "u_00000000.bin"));
}

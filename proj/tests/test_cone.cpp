#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "imch/cone.hpp"
#include "imch/error.hpp"
#include "imch/lattice.hpp"
#include "imch/rng.hpp"
#include "oracles.hpp"

using namespace imch;

namespace {

SpectralField rand_field(const GridPtr& g, CounterRng& rng, double amp, double decay = 1.0) {
  return random_field(g, g->dealias_mask(), amp, decay, rng);
}

// f(u) = c u^2 / 2: multiplier f'(u) = c u, band-limited whenever u is.
NonlinearitySpec quadratic(double c) {
  NonlinearitySpec s;
  s.name = "quadratic";
  s.f = [c](double u) { return 0.5 * c * u * u; };
  s.f_prime = [c](double u) { return c * u; };
  s.f_second = [c](double) { return c; };
  return s;
}

NonlinearitySpec linear(double c) {
  NonlinearitySpec s;
  s.name = "linear";
  s.f = [c](double u) { return c * u; };
  s.f_prime = [c](double) { return c; };
  s.f_second = [](double) { return 0.0; };
  s.L = std::abs(c);
  return s;
}

SpectralField single_mode(const GridPtr& g, const LatticePoint& l) {
  SpectralField w(g);
  w.set_mode(l, Complex(0.6, -0.8));
  return w;
}

}  // namespace

TEST_CASE("cone form identities") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 18);
  const ConeForm form(p, 0.2);
  CounterRng rng(1);
  for (int i = 0; i < 50; ++i) {
    const SpectralField xi = rand_field(g, rng, 1.0, 0.5);
    const auto [minus, plus] = form.split_norms(xi);
    CHECK(form.V(xi) == doctest::Approx(h_norm_squared(project(xi, p, Projector::Q_N), -1.0) -
                                        h_norm_squared(project(xi, p, Projector::P_N), -1.0))
                            .epsilon(1e-12));
    CHECK(form.V_eps(xi) == doctest::Approx(form.V_eps_split(xi)).epsilon(1e-12));
    CHECK(form.V_eps(xi) == doctest::Approx((1.0 + 0.2) * form.V(xi) + 2.0 * 0.2 * plus).epsilon(1e-12));
    CHECK(minus + plus == doctest::Approx(h_norm_squared(xi, -1.0)).epsilon(1e-12));
  }
  const SpectralField xp = project(rand_field(g, rng, 1.0), p, Projector::P_N);
  CHECK(form.V(xp) == doctest::Approx(-h_norm_squared(xp, -1.0)));
  CHECK(form.in_cone(xp));

  // one mode on each side with equal H^-1 weight sits on the boundary
  SpectralField b(g);
  b.set_mode({1, 0, 0}, Complex(1.0, 0.0));                    // lambda = 1
  b.set_mode({1, 1, 1}, Complex(std::sqrt(3.0), 0.0));         // lambda = 3 > lambda_N = 2
  CHECK(std::abs(form.V(b)) < 1e-14);
  CHECK(form.in_cone(b));
  CHECK_THROWS_AS(ConeForm(p, 1.0), Error);
}

TEST_CASE("spectral-gap constants") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 32);  // lambda_N = 4, lambda_{N+1} = 5
  const ConeConstants c = spectral_gap_constants(p, 0.1);
  CHECK(c.alpha_base == 20.0);
  CHECK(c.alpha == 40.0);
  CHECK(c.mu == doctest::Approx(1.8));
  CHECK(spectral_gap_constants(p, 1.5).mu < 0.0);
}

TEST_CASE("equality cases at lambda_N and lambda_{N+1} with F = 0") {
  const auto g = SpectralGrid::make(16);
  const auto zero = zero_nonlinearity();
  const SpectralField u(g);
  for (std::int64_t n_index : {6, 18, 26, 32, 56, 80}) {
    const ProjectorSpec p(g, n_index);
    const ConeConstants c = spectral_gap_constants(p, 0.0);
    const auto& modes = g->ordered_modes();
    const SpectralField at_n = single_mode(g, g->mode(modes[std::size_t(n_index - 1)]));
    const SpectralField at_n1 = single_mode(g, g->mode(modes[std::size_t(n_index)]));
    REQUIRE(g->lambda(modes[std::size_t(n_index - 1)]) == p.lambda_n());
    REQUIRE(g->lambda(modes[std::size_t(n_index)]) == p.lambda_n1());
    CHECK(std::abs(strong_cone_residual(u, at_n, c.alpha, c.mu, zero, p)) < 1e-12);
    CHECK(std::abs(strong_cone_residual(u, at_n1, c.alpha, c.mu, zero, p)) < 1e-12);
  }
}

TEST_CASE("residual matches the closed-form modewise value and is quadratic") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 18);
  const auto zero = zero_nonlinearity();
  const double alpha = 7.0, mu = 0.3;
  for (const LatticePoint& l : {LatticePoint{1, 0, 0}, LatticePoint{1, 1, 0}, LatticePoint{2, 1, 1}}) {
    const SpectralField w = single_mode(g, l);
    const double lam = static_cast<double>(squared_norm(l));
    const double J = lam <= 2.0 ? -1.0 : 1.0;
    const double w2 = h_norm_squared(w, 0.0);
    const double expected = (-2.0 * lam * J + alpha * J / lam + mu) * w2;
    CHECK(strong_cone_residual(SpectralField(g), w, alpha, mu, zero, p) == doctest::Approx(expected).epsilon(1e-13));
  }
  CounterRng rng(2);
  const auto f = sine_nonlinearity(0.7);
  for (int i = 0; i < 20; ++i) {
    const SpectralField u = rand_field(g, rng, 1.0);
    const SpectralField w = rand_field(g, rng, 1.0);
    const double r = strong_cone_residual(u, w, alpha, mu, f, p);
    CHECK(strong_cone_residual(u, -3.0 * w, alpha, mu, f, p) == doctest::Approx(9.0 * r).epsilon(1e-12));
  }
}

TEST_CASE("assembled form agrees with the residual and is negative semidefinite under the gap") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 32);
  const RealBasis basis(g, g->dealias_mask());
  CounterRng rng(3);

  const ConeConstants c0 = spectral_gap_constants(p, 0.0);
  const Eigen::MatrixXd S0 = assemble_strong_cone_form(SpectralField(g), c0.alpha, c0.mu, zero_nonlinearity(), p, basis);
  CHECK(max_eigenvalue(S0) <= 1e-10);
  CHECK(max_eigenvalue(S0) >= -1e-10);  // equality modes exist

  const auto f = sine_nonlinearity(0.1);
  const ConeConstants c = spectral_gap_constants(p, f.L);
  const SpectralField u = rand_field(g, rng, 1.5);
  const Eigen::MatrixXd S = assemble_strong_cone_form(u, c.alpha, c.mu, f, p, basis);
  CHECK((S - S.transpose()).norm() == 0.0);
  CHECK(max_eigenvalue(S) <= 1e-10);
  for (int i = 0; i < 5; ++i) {
    const SpectralField w = rand_field(g, rng, 1.0);
    const Eigen::VectorXd x = basis.coordinates(w);
    CHECK(x.dot(S * x) == doctest::Approx(strong_cone_residual(u, w, c.alpha, c.mu, f, p)).epsilon(1e-10));
  }
}

TEST_CASE("Monte-Carlo strong cone residual with f = 0.1 sin") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 32);
  const auto f = sine_nonlinearity(0.1);
  const ConeConstants c = spectral_gap_constants(p, f.L);
  REQUIRE(c.mu > 0.0);
  CounterRng rng(4);
  int violations = 0;
  for (int i = 0; i < 2000; ++i) {
    CounterRng r = rng.split(std::uint64_t(i));
    const SpectralField u = rand_field(g, r, 2.0, 0.5);
    const SpectralField w = rand_field(g, r, 1.0, r.uniform(0.0, 2.0));
    if (strong_cone_residual(u, w, c.alpha, c.mu, f, p) > 0.0) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("alpha(u) branches and averaging") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 18);
  const auto f = sine_nonlinearity(0.5);
  CounterRng rng(5);
  const SpectralField u1 = rand_field(g, rng, 0.8);
  const SpectralField u2 = rand_field(g, rng, 0.8);
  const double base = 2.0 * 2.0 * 3.0;
  CHECK(alpha_of_u(SpectralField(g), f, p) == doctest::Approx(base - 2.0 * 2.0 * 0.5));
  CHECK(alpha_of_u(u1, f, p) == doctest::Approx(base - 4.0 * spatial_average_a(u1, f)));
  CHECK(alpha_of_u(u1, zero_nonlinearity(), p) == base);

  const CutoffSpec cut(0.1, 0.45);
  SpectralField big(g);
  big.set_mode({1, 0, 0}, Complex(1.0, 0.0));
  REQUIRE(h_norm(project(big, p, Projector::P_N), 2.0) > cut.r_1());
  CHECK(alpha_of_u(big, f, p, &cut) == 0.75 * base);

  CHECK(averaged_alpha(u1, u1, f, p, nullptr, 3) == doctest::Approx(alpha_of_u(u1, f, p)).epsilon(1e-13));
  CHECK(averaged_alpha(u1, u2, zero_nonlinearity(), p) == doctest::Approx(base));
  // composite Simpson on the segment as the reference
  double simpson = 0.0;
  const int n = 400;
  for (int i = 0; i <= n; ++i) {
    const double s = double(i) / n;
    const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    simpson += wgt * alpha_of_u(s * u1 + (1.0 - s) * u2, f, p);
  }
  simpson /= 3.0 * n;
  CHECK(averaged_alpha(u1, u2, f, p, nullptr, 16) == doctest::Approx(simpson).epsilon(1e-10));
  CHECK(averaged_alpha(u1, u2, f, p, nullptr, 3) == doctest::Approx(simpson).epsilon(1e-2));
  // one node is the midpoint rule
  CHECK(averaged_alpha(u1, u2, f, p, nullptr, 1) == doctest::Approx(alpha_of_u(0.5 * u1 + 0.5 * u2, f, p)));
  CHECK_THROWS_AS(averaged_alpha(u1, u2, f, p, nullptr, 0), Error);
}

TEST_CASE("spatial averaging residual") {
  const auto g = SpectralGrid::make(32);
  const auto f = sine_nonlinearity(1.0);
  const ProjectorSpec p(g, index_of_value(*g, 4), 0.0);  // shell lambda = 4, separated at r = 2
  REQUIRE(shell_separation_holds(4, 0.0, 2.0));

  SUBCASE("zero field and constant multiplier") {
    const auto r = spatial_averaging_residual(SpectralField(g), f, p);
    CHECK(r.norm <= 1e-10);
    CHECK(r.a == doctest::Approx(1.0));
    CHECK(r.shell_modes == 6);
    CounterRng rng(6);
    const auto lin = spatial_averaging_residual(rand_field(g, rng, 1.0), linear(0.3), p);
    CHECK(lin.norm <= 1e-13);
    CHECK(lin.a == doctest::Approx(0.3));
  }

  SUBCASE("band-limited multiplier below the separation radius") {
    const Mask low = g->eigenvalues() <= 4.0;  // |l| <= 2 = r
    CounterRng rng(7);
    const SpectralField u = random_field(g, low, 1.0, 0.0, rng);
    CHECK(spatial_averaging_residual(u, quadratic(1.0), p).norm <= 1e-13);
    // a multiplier with content at distance sqrt 8 couples the shell
    SpectralField v(g);
    v.set_mode({2, 2, 0}, Complex(0.25, 0.0));
    CHECK(spatial_averaging_residual(v, quadratic(1.0), p).norm == doctest::Approx(0.25));
  }

  SUBCASE("small band-limited u with f = sin") {
    const Mask low = g->eigenvalues() <= 1.0;
    CounterRng rng(3);
    const SpectralField u = random_field(g, low, 0.01, 0.0, rng);
    CHECK(spatial_averaging_residual(u, f, p).norm <= 1e-8);
  }

  SUBCASE("matrix oracle on a non-separated shell") {
    // lambda = 1 shell: e_l -> sum_m w_{m-l} e_m restricted to the shell
    const ProjectorSpec p1(g, index_of_value(*g, 1), 0.0);
    CounterRng rng(8);
    const SpectralField u = rand_field(g, rng, 0.7, 2.0);
    const auto res = spatial_averaging_residual(u, f, p1);
    const RealBasis basis(g, p1.mask(Projector::R_kN));
    const Eigen::ArrayXd mult = derivative_multiplier(u, f);
    const double a = spatial_average_a(u, f);
    Eigen::MatrixXd B(basis.dimension(), basis.dimension());
    for (Index j = 0; j < basis.dimension(); ++j) {
      const SpectralField e = basis.basis_vector(j);
      B.col(j) = basis.coordinates(apply_multiplier(mult, e) - a * e);
    }
    const double expected = Eigen::JacobiSVD<Eigen::MatrixXd>(B).singularValues()(0);
    CHECK(res.norm == doctest::Approx(expected).epsilon(1e-10));
    CHECK(res.a == doctest::Approx(a).epsilon(1e-13));
    CHECK(res.norm <= 2.0 * f.L * std::sqrt(double(res.shell_modes)));
  }
}

TEST_CASE("averaging residual decreases with the separation radius") {
  const auto g = SpectralGrid::make(32);
  const auto f = sine_nonlinearity(1.0);
  const auto table = enumerate_eigenvalues(g->complete_value());
  CounterRng rng(7);
  const SpectralField u = rand_field(g, rng, 1.0, 2.0);
  std::vector<double> rs, norms;
  for (double r : {1.0, 2.0, 3.0, 4.0, 6.0}) {
    for (const auto& e : table.entries()) {
      if (e.value >= g->complete_value()) break;
      if (!shell_separation_holds(e.value, 0.0, r)) continue;
      const ProjectorSpec p(g, e.last_index(), 0.0);
      rs.push_back(r);
      norms.push_back(spatial_averaging_residual(u, f, p).norm);
      break;
    }
  }
  REQUIRE(rs.size() == 5);
  const double slope = oracle::loglog_slope(rs, norms);
  MESSAGE("r-sweep slope " << slope);
  CHECK(slope < 0.0);
}

TEST_CASE("cut-off inequality") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 18);
  const CutoffSpec cut(1.0, 4.5);
  const double ln = 2.0;
  CounterRng rng(10);

  SUBCASE("plateau values") {
    SpectralField u(g);
    u.set_mode({1, 1, 0}, Complex(10.0, 0.0));  // ||A P_N u|| = 2 * 10 * sqrt2 > R_1
    const SpectralField v = project(rand_field(g, rng, 1.0), p, Projector::P_N);
    CHECK(verify_cutoff_inequality(u, v, cut, p) ==
          doctest::Approx(-0.5 * ln * h_norm_squared(v, 0.0)).epsilon(1e-12));
    const SpectralField small = 0.01 * u;
    CHECK(verify_cutoff_inequality(small, v, cut, p) ==
          doctest::Approx(0.5 * h_norm_squared(v, 1.0) - 0.5 * ln * h_norm_squared(v, 0.0)).epsilon(1e-12));
  }

  SUBCASE("random samples through the transition") {
    int violations = 0;
    for (int i = 0; i < 2000; ++i) {
      CounterRng r = rng.split(std::uint64_t(i));
      SpectralField u = project(rand_field(g, r, 1.0, 0.0), p, Projector::P_N);
      const double target = std::exp(r.uniform(std::log(1.0), std::log(6.0)));
      u = (target / h_norm(u, 2.0)) * u + project(rand_field(g, r, 1.0), p, Projector::Q_N);
      const SpectralField v = project(rand_field(g, r, 1.0, 0.0), p, Projector::P_N);
      if (verify_cutoff_inequality(u, v, cut, p) > 0.0) ++violations;
    }
    CHECK(violations == 0);
  }

  SUBCASE("v must lie in H_+") {
    CHECK_THROWS_AS(verify_cutoff_inequality(SpectralField(g), rand_field(g, rng, 1.0), cut, p), Error);
  }
}

TEST_CASE("reflection inequality") {
  CounterRng rng(11);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd v(6), w(6), y(6);
    for (int j = 0; j < 6; ++j) {
      v(j) = rng.normal();
      w(j) = rng.normal();
      y(j) = rng.normal();
    }
    CHECK(reflection_gap(v, w, y) >= -1e-12);
    const Eigen::VectorXd refl = v - 2.0 * v.dot(y) / y.squaredNorm() * y;
    CHECK(std::abs(reflection_gap(v, Eigen::VectorXd(2.5 * refl), y)) < 1e-11);
  }
  // the field overload agrees with the coordinate form
  const auto g = SpectralGrid::make(8);
  const RealBasis basis(g, g->dealias_mask());
  const SpectralField a = random_field(g, g->dealias_mask(), 1.0, 0.0, rng);
  const SpectralField b = random_field(g, g->dealias_mask(), 1.0, 0.0, rng);
  const SpectralField y = random_field(g, g->dealias_mask(), 1.0, 0.0, rng);
  const Eigen::VectorXd ca = basis.coordinates(a), cb = basis.coordinates(b), cy = basis.coordinates(y);
  CHECK(reflection_gap(a, b, y) == doctest::Approx(reflection_gap(ca, cb, cy)).epsilon(1e-12));
}

TEST_CASE("cone monitor along pairs of solutions") {
  const auto g = SpectralGrid::make(16);
  const ProjectorSpec p(g, 32);
  const auto f = sine_nonlinearity(0.1);
  const ConeConstants c = spectral_gap_constants(p, f.L);
  SolverConfig cfg;
  cfg.grid = g;
  cfg.dt = 1e-3;
  cfg.t_end = 0.1;
  cfg.nonlinearity = f;
  const ConeForm form(p);
  CounterRng rng(12);
  const SpectralField u0 = rand_field(g, rng, 1.0);

  SUBCASE("difference starting in the cone stays there") {
    const SpectralField v0 = u0 + 0.1 * project(rand_field(g, rng, 1.0, 0.0), p, Projector::P_N) +
                             0.01 * project(rand_field(g, rng, 1.0), p, Projector::Q_N);
    REQUIRE(form.V(v0 - u0) < 0.0);
    const auto [a, b] = evolve_pair(v0, u0, cfg);
    const MonitorReport rep = monitor_cone_along(a, b, form, constant_alpha(c.alpha), c.mu);
    CHECK(rep.cone_exits == 0);
    CHECK_FALSE(rep.ends_outside_cone);
    for (const auto& r : rep.rows) CHECK(r.V <= 0.0);
    CHECK(std::isnan(rep.rows.front().defect));
  }

  SUBCASE("difference outside the cone decays at least at the predicted rate") {
    const SpectralField v0 = u0 + 0.1 * project(rand_field(g, rng, 1.0, 0.0), p, Projector::Q_N);
    const auto [a, b] = evolve_pair(v0, u0, cfg);
    const MonitorReport rep =
        monitor_cone_along(a, b, form, averaged_alpha_fn(f, p, std::nullopt, 3), c.mu);
    REQUIRE(rep.ends_outside_cone);
    CHECK(rep.alpha_minus > 0.0);
    CHECK(rep.alpha_minus <= rep.alpha_plus);
    CHECK(rep.predicted_rate == doctest::Approx(rep.alpha_minus + 0.5 * c.mu));
    MESSAGE("fitted " << rep.fitted_rate << " predicted " << rep.predicted_rate);
    CHECK(rep.fitted_rate >= 0.9 * rep.predicted_rate);
    // the continuous inequality holds up to the centered-difference error
    CHECK(rep.max_defect <= 0.0);
  }

  SUBCASE("mismatched grids") {
    Trajectory a = evolve(u0, cfg);
    Trajectory b = a;
    b.times[1] += 1e-4;
    CHECK_THROWS_AS(monitor_cone_along(a, b, form, constant_alpha(1.0), 1.0), Error);
  }
}

TEST_CASE("epsilon recipe and rate fit") {
  const double eps = epsilon_recipe(0.1, 40.0, 1.0, 1.8);
  CHECK((2.0 * 0.1 + 40.0) * eps == doctest::Approx(1.8 / 4.0));
  CHECK_THROWS_AS(epsilon_recipe(0.1, 40.0, 1.0, -1.0), Error);
  std::vector<double> t, y;
  for (int i = 0; i < 10; ++i) {
    t.push_back(0.1 * i);
    y.push_back(3.0 * std::exp(-7.5 * 0.1 * i));
  }
  CHECK(fit_decay_rate(t, y) == doctest::Approx(7.5));
}

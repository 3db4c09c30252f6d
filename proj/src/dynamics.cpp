#include "imch/dynamics.hpp"

#include <cmath>
#include <limits>

#include "imch/error.hpp"

namespace imch {

const char* to_string(Scheme s) { return s == Scheme::ETD1 ? "ETD1" : "ETDRK2"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "ETD1" || name == "etd1") return Scheme::ETD1;
  if (name == "ETDRK2" || name == "etdrk2") return Scheme::ETDRK2;
  fail(ErrorKind::InvalidArgument, "unknown scheme '" + name + "' (expected ETD1 or ETDRK2)");
}

double stable_dt_limit(const SpectralGrid& grid, double lipschitz) {
  if (lipschitz <= 0.0) return std::numeric_limits<double>::infinity();
  const double lambda_max = 3.0 * grid.dealias_cutoff() * grid.dealias_cutoff();
  return 1.0 / (2.0 * lipschitz * lambda_max);
}

long steps_for(double t, double dt) {
  require(dt > 0.0 && t >= 0.0, "steps_for needs dt > 0 and t >= 0");
  const double n = std::round(t / dt);
  require(std::abs(n * dt - t) <= 1e-9 * std::max(t, dt),
          "time " + std::to_string(t) + " is not a multiple of dt=" + std::to_string(dt));
  return static_cast<long>(n);
}

namespace {

// phi_1(z) = (e^z - 1)/z and phi_2(z) = (e^z - 1 - z)/z^2 for z <= 0.
double etd_phi1(double z) { return z == 0.0 ? 1.0 : std::expm1(z) / z; }

double etd_phi2(double z) {
  if (std::abs(z) < 1e-3) return 0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0));
  return (std::expm1(z) - z) / (z * z);
}

void check_step(const SpectralField& before, const SpectralField& after) {
  if (!after.all_finite()) fail(ErrorKind::NumericFailure, "non-finite coefficients after a step");
  const double n0 = h_norm(before, 0.0);
  const double n1 = h_norm(after, 0.0);
  if (n1 > 10.0 * n0 + 1e-8) {
    fail(ErrorKind::StepRejected, "H^0 norm grew from " + std::to_string(n0) + " to " + std::to_string(n1) +
                                      " in one step; reduce dt");
  }
}

}  // namespace

Integrator::Integrator(SolverConfig config) : config_(std::move(config)) {
  const SolverConfig& c = config_;
  if (!c.grid) fail(ErrorKind::InvalidConfig, "solver has no grid");
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) fail(ErrorKind::InvalidConfig, "dt must be positive and finite");
  if (c.checkpoint_stride < 1) fail(ErrorKind::InvalidConfig, "checkpoint_stride must be >= 1");
  if (c.projector && c.projector->grid() != c.grid) {
    fail(ErrorKind::InvalidConfig, "projector was built for a different grid");
  }
  if (c.modified && (!c.cutoff || !c.projector)) {
    fail(ErrorKind::InvalidConfig, "the cut-off flow needs both a cutoff and a projector");
  }
  const double limit = stable_dt_limit(*c.grid, c.nonlinearity.L);
  if (!c.allow_unstable_dt && c.dt > limit) {
    fail(ErrorKind::InvalidConfig, "dt=" + std::to_string(c.dt) + " exceeds the stability limit " +
                                       std::to_string(limit) + " = 1/(2 L lambda_max)");
  }

  lambda_ = c.grid->eigenvalues();
  const Index n = lambda_.size();
  decay_.resize(n);
  phi1_.resize(n);
  phi2_.resize(n);
  for (Index f = 0; f < n; ++f) {
    const double z = -lambda_(f) * lambda_(f) * c.dt;
    decay_(f) = std::exp(z);
    phi1_(f) = c.dt * etd_phi1(z);
    phi2_(f) = c.dt * etd_phi2(z);
  }
}

double Integrator::eta(const SpectralField& u) const {
  const Mask& p = config_.projector->mask(Projector::P_N);
  const Eigen::VectorXcd& c = u.coeffs();
  double s = 0.0;
  for (Index f = 1; f < c.size(); ++f) {
    if (p(f)) s += lambda_(f) * lambda_(f) * std::norm(c(f));
  }
  return s;
}

SpectralField Integrator::nonlinear_term(const SpectralField& u) const {
  SpectralField out = apply_F(u, config_.nonlinearity);
  out.coeffs().array() *= -lambda_;
  if (config_.modified) {
    const double phi = config_.cutoff->phi(eta(u));
    if (phi != 1.0) {
      const Mask& p = config_.projector->mask(Projector::P_N);
      for (Index f = 1; f < out.coeffs().size(); ++f) {
        if (p(f)) out.coeffs()(f) -= (phi - 1.0) * lambda_(f) * lambda_(f) * u.coeffs()(f);
      }
    }
  }
  return out;
}

PointLinearization Integrator::linearize(const SpectralField& u) const {
  PointLinearization lin;
  if (!config_.nonlinearity.identically_zero) lin.multiplier = derivative_multiplier(u, config_.nonlinearity);
  if (config_.modified) {
    const double e = eta(u);
    lin.phi = config_.cutoff->phi(e);
    lin.phi_prime = config_.cutoff->phi_prime(e);
    lin.cutoff_term = lin.phi != 1.0 || lin.phi_prime != 0.0;
    if (lin.cutoff_term) lin.a_u_plus = apply_A(project(u, *config_.projector, Projector::P_N));
  }
  return lin;
}

SpectralField Integrator::nonlinear_derivative(const PointLinearization& lin, const SpectralField& w) const {
  SpectralField out = lin.multiplier.size() > 0 ? apply_multiplier(lin.multiplier, w) : SpectralField(w.grid());
  out.coeffs().array() *= -lambda_;
  if (lin.cutoff_term) {
    // d/dw of -(phi(eta) - 1) A^2 P_N u, with d eta = 2 (A u_+, A w_+).
    const Mask& p = config_.projector->mask(Projector::P_N);
    const Eigen::VectorXcd& au = lin.a_u_plus.coeffs();
    const Eigen::VectorXcd& wc = w.coeffs();
    double inner = 0.0;
    for (Index f = 1; f < wc.size(); ++f) {
      if (p(f)) inner += lambda_(f) * (au(f) * std::conj(wc(f))).real();
    }
    const double g = 2.0 * lin.phi_prime * inner;
    for (Index f = 1; f < wc.size(); ++f) {
      if (p(f)) out.coeffs()(f) -= (lin.phi - 1.0) * lambda_(f) * lambda_(f) * wc(f) + g * lambda_(f) * au(f);
    }
  }
  return out;
}

SpectralField Integrator::step(const SpectralField& u, StepLinearization* lin) const {
  require(u.grid() == config_.grid, "field and solver live on different grids");
  const SpectralField nu = nonlinear_term(u);
  SpectralField a(u.grid());
  a.coeffs() = (u.coeffs().array() * decay_ + nu.coeffs().array() * phi1_).matrix();
  a.coeffs()(0) = 0.0;
  if (lin) lin->at_start = linearize(u);
  if (config_.scheme == Scheme::ETD1) {
    check_step(u, a);
    return a;
  }
  const SpectralField na = nonlinear_term(a);
  SpectralField out = a;
  out.coeffs().array() += (na.coeffs().array() - nu.coeffs().array()) * phi2_;
  out.coeffs()(0) = 0.0;
  if (lin) lin->at_stage = linearize(a);
  check_step(u, out);
  return out;
}

SpectralField Integrator::step_variational(const StepLinearization& lin, const SpectralField& w) const {
  const SpectralField nw = nonlinear_derivative(lin.at_start, w);
  SpectralField da(w.grid());
  da.coeffs() = (w.coeffs().array() * decay_ + nw.coeffs().array() * phi1_).matrix();
  da.coeffs()(0) = 0.0;
  if (config_.scheme == Scheme::ETD1) {
    if (!da.all_finite()) fail(ErrorKind::NumericFailure, "non-finite tangent after a step");
    return da;
  }
  const SpectralField nda = nonlinear_derivative(lin.at_stage, da);
  SpectralField out = da;
  out.coeffs().array() += (nda.coeffs().array() - nw.coeffs().array()) * phi2_;
  out.coeffs()(0) = 0.0;
  if (!out.all_finite()) fail(ErrorKind::NumericFailure, "non-finite tangent after a step");
  return out;
}

SpectralField Integrator::step_variational(const SpectralField& u, const SpectralField& w) const {
  StepLinearization lin;
  step(u, &lin);
  return step_variational(lin, w);
}

SpectralField Integrator::advance(SpectralField u, long n_steps) const {
  for (long i = 0; i < n_steps; ++i) u = step(u);
  return u;
}

SpectralField step(const SpectralField& u, const SolverConfig& config) {
  SolverConfig c = config;
  c.modified = false;
  return Integrator(std::move(c)).step(u);
}

SpectralField step_modified(const SpectralField& u, const SolverConfig& config) {
  SolverConfig c = config;
  c.modified = true;
  return Integrator(std::move(c)).step(u);
}

SpectralField step_variational(const SpectralField& u, const SpectralField& w, const SolverConfig& config) {
  return Integrator(config).step_variational(u, w);
}

Trajectory evolve(const SpectralField& u0, const SolverConfig& config) {
  const Integrator integ(config);
  const long n = steps_for(config.t_end, config.dt);
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(u0);
  SpectralField u = u0;
  for (long i = 1; i <= n; ++i) {
    u = integ.step(u);
    if (i % config.checkpoint_stride == 0 || i == n) {
      traj.times.push_back(static_cast<double>(i) * config.dt);
      traj.states.push_back(u);
    }
  }
  return traj;
}

std::pair<Trajectory, Trajectory> evolve_pair(const SpectralField& u0, const SpectralField& v0,
                                              const SolverConfig& config) {
  return {evolve(u0, config), evolve(v0, config)};
}

NormRow norm_row(double t, const SpectralField& u) {
  return {t, h_norm(u, -1.0), h_norm(u, 0.0), h_norm(u, 2.0), u.mean()};
}

double calibrate_r_star(const SpectralField& u0, const SolverConfig& config, double t_burn, double t_run) {
  SolverConfig c = config;
  c.modified = false;
  const Integrator integ(c);
  SpectralField u = integ.advance(u0, steps_for(t_burn, c.dt));
  double sup = h_norm(u, 2.0);
  const long n = steps_for(t_run, c.dt);
  for (long i = 0; i < n; ++i) {
    u = integ.step(u);
    sup = std::max(sup, h_norm(u, 2.0));
  }
  if (!(sup > 0.0)) fail(ErrorKind::NumericFailure, "calibration run decayed to zero; R_star undefined");
  return 1.2 * sup;
}

}  // namespace imch

#include "imch/manifold.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "imch/error.hpp"

namespace imch {

namespace {

struct Evaluation {
  Eigen::VectorXd r;  // coordinates of P_N u(0) - u_+
  double residual = 0.0;
  SpectralField w;
  SpectralField u_final;
  Eigen::MatrixXd J;
  std::vector<SpectralField> tangent_minus;
};

class BvpContext {
 public:
  BvpContext(const SpectralField& target, double T, const ManifoldConfig& config)
      : integ_(config.solver),
        projector_(*config.solver.projector),
        basis_(config.solver.grid, projector_.mask(Projector::P_N)),
        n_steps_(steps_for(T, config.solver.dt)) {
    target_ = basis_.coordinates(target);
    const Index n = basis_.dimension();
    inv_lambda_.resize(n);
    scale_.resize(n);
    // Backward growth of P_N modes is e^{lambda^2 T}, halved in the exponent on
    // the phi = 1/2 plateau of the cut-off flow.
    double c = 1.0;
    if (config.solver.modified) {
      const double eta = h_norm_squared(target, 2.0);
      if (config.solver.cutoff->phi(eta) == 0.5) c = 0.5;
    }
    for (Index i = 0; i < n; ++i) {
      const double lam = basis_.eigenvalue(i);
      inv_lambda_(i) = 1.0 / lam;
      scale_(i) = std::exp(c * lam * lam * T);
    }
  }

  Index dimension() const { return basis_.dimension(); }
  const Eigen::VectorXd& scale() const { return scale_; }
  const Eigen::VectorXd& target() const { return target_; }

  double h_minus1(const Eigen::VectorXd& r) const {
    return std::sqrt((r.array().square() * inv_lambda_.array()).sum());
  }

  Evaluation evaluate(const Eigen::VectorXd& y, bool with_tangents) const {
    Evaluation ev;
    ev.w = basis_.field(scale_.cwiseProduct(y));
    const Index n = dimension();
    std::vector<SpectralField> tangents;
    if (with_tangents) {
      tangents.reserve(std::size_t(n));
      for (Index j = 0; j < n; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e(j) = scale_(j);
        tangents.push_back(basis_.field(e));
      }
    }
    SpectralField u = ev.w;
    StepLinearization lin;
    for (long s = 0; s < n_steps_; ++s) {
      if (with_tangents) {
        u = integ_.step(u, &lin);
        for (auto& t : tangents) t = integ_.step_variational(lin, t);
      } else {
        u = integ_.step(u);
      }
    }
    ev.u_final = u;
    ev.r = basis_.coordinates(u) - target_;
    ev.residual = h_minus1(ev.r);
    if (with_tangents) {
      ev.J.resize(n, n);
      ev.tangent_minus.reserve(std::size_t(n));
      for (Index j = 0; j < n; ++j) {
        ev.J.col(j) = basis_.coordinates(tangents[std::size_t(j)]);
        ev.tangent_minus.push_back(project(tangents[std::size_t(j)], projector_, Projector::Q_N));
      }
    }
    return ev;
  }

  std::shared_ptr<const RealBasis> basis() const { return std::make_shared<const RealBasis>(basis_); }

 private:
  Integrator integ_;
  const ProjectorSpec& projector_;
  RealBasis basis_;
  long n_steps_;
  Eigen::VectorXd target_;
  Eigen::VectorXd inv_lambda_;
  Eigen::VectorXd scale_;
};

double condition_number(const Eigen::MatrixXd& J) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

void check_config(const ManifoldConfig& config) {
  if (!config.solver.projector) fail(ErrorKind::InvalidConfig, "manifold construction needs a projector");
  if (!(config.newton_tol > 0.0) || !(config.phi_tol > 0.0)) {
    fail(ErrorKind::InvalidConfig, "manifold tolerances must be positive");
  }
  if (!(config.T0 > 0.0) || config.T_max < config.T0) fail(ErrorKind::InvalidConfig, "need 0 < T0 <= T_max");
}

void check_plus(const SpectralField& u, const ProjectorSpec& projector, const char* what) {
  const Mask& q = projector.mask(Projector::Q_N);
  for (Index f = 0; f < u.coeffs().size(); ++f) {
    require(!q(f) || u.coeffs()(f) == Complex(0.0, 0.0), std::string(what) + " must lie in H_+");
  }
}

}  // namespace

BvpResult solve_bvp(const SpectralField& u0_plus, double T, const ManifoldConfig& config,
                    const Eigen::VectorXd* warm_y) {
  check_config(config);
  check_plus(u0_plus, *config.solver.projector, "u0_plus");
  const BvpContext ctx(u0_plus, T, config);
  const Index n = ctx.dimension();

  Eigen::VectorXd y;
  if (warm_y) {
    require(warm_y->size() == n, "warm start has the wrong dimension");
    y = *warm_y;
  } else {
    y = ctx.target();  // w_l = u_l e^{c lambda^2 T}: exact for F = 0
  }

  BvpResult res;
  res.T = T;
  res.scale = ctx.scale();
  res.basis = ctx.basis();
  Evaluation ev = ctx.evaluate(y, true);
  res.residual_history.push_back(ev.residual);
  int iter = 0;
  while (ev.residual > config.newton_tol) {
    if (iter >= config.max_newton_iters) {
      fail(ErrorKind::NewtonDiverged, "Newton did not reach tol " + std::to_string(config.newton_tol) +
                                          " in " + std::to_string(iter) + " iterations (residual " +
                                          std::to_string(ev.residual) + ", T=" + std::to_string(T) + ")");
    }
    res.jacobian_cond = condition_number(ev.J);
    if (!(res.jacobian_cond <= config.condition_limit)) {
      fail(ErrorKind::JacobianSingular, "BVP Jacobian condition " + std::to_string(res.jacobian_cond) +
                                            " exceeds " + std::to_string(config.condition_limit) +
                                            " at T=" + std::to_string(T));
    }
    const Eigen::VectorXd delta = ev.J.fullPivLu().solve(-ev.r);
    double step = 1.0;
    bool accepted = false;
    for (int b = 0; b <= config.max_backtracks; ++b, step *= 0.5) {
      Evaluation trial = ctx.evaluate(y + step * delta, true);
      if (trial.residual < ev.residual || trial.residual <= config.newton_tol) {
        y += step * delta;
        ev = std::move(trial);
        accepted = true;
        break;
      }
    }
    ++iter;
    if (!accepted) {
      fail(ErrorKind::NewtonDiverged, "Newton backtracking exhausted at residual " + std::to_string(ev.residual) +
                                          " (T=" + std::to_string(T) + ")");
    }
    res.residual_history.push_back(ev.residual);
  }
  res.jacobian_cond = condition_number(ev.J);
  res.newton_iters = iter;
  res.residual = ev.residual;
  res.y = y;
  res.w_init = std::move(ev.w);
  res.u_final = std::move(ev.u_final);
  res.jacobian = std::move(ev.J);
  res.tangent_minus = std::move(ev.tangent_minus);
  return res;
}

namespace {

// Rate per unit T from the last two positive doubling gaps.
double gap_rate(const std::vector<double>& horizons, const std::vector<double>& gaps) {
  if (gaps.empty()) return 0.0;
  if (gaps.back() == 0.0) return std::numeric_limits<double>::infinity();
  if (gaps.size() < 2 || gaps[gaps.size() - 2] == 0.0) return 0.0;
  const std::size_t k = gaps.size() - 1;
  return -std::log(gaps[k] / gaps[k - 1]) / (horizons[k + 1] - horizons[k]);
}

}  // namespace

ManifoldSample phi_of(const SpectralField& u_plus, const ManifoldConfig& config) {
  check_config(config);
  const ProjectorSpec& proj = *config.solver.projector;
  ManifoldSample s;
  s.u_plus = u_plus;
  double T = config.T0;
  BvpResult bvp = solve_bvp(u_plus, T, config);
  SpectralField phi = project(bvp.u_final, proj, Projector::Q_N);
  s.horizons.push_back(T);
  s.newton_iters = bvp.newton_iters;
  while (true) {
    const double next = 2.0 * T;
    if (next > config.T_max * (1.0 + 1e-12)) {
      fail(ErrorKind::NoConvergence, "phi_of: Cauchy gap " +
                                         (s.gaps.empty() ? std::string("n/a") : std::to_string(s.gaps.back())) +
                                         " still above " + std::to_string(config.phi_tol) +
                                         " at T_max=" + std::to_string(config.T_max));
    }
    BvpResult nb = solve_bvp(u_plus, next, config, &bvp.y);
    SpectralField nphi = project(nb.u_final, proj, Projector::Q_N);
    const double gap = h_norm(nphi - phi, -1.0);
    s.gaps.push_back(gap);
    s.horizons.push_back(next);
    s.newton_iters += nb.newton_iters;
    T = next;
    bvp = std::move(nb);
    phi = std::move(nphi);
    if (gap < config.phi_tol) break;
    if (s.gaps.size() >= 3 && s.gaps.back() >= s.gaps[s.gaps.size() - 2] &&
        s.gaps[s.gaps.size() - 2] >= s.gaps[s.gaps.size() - 3]) {
      fail(ErrorKind::NoConvergence, "phi_of: doubling gaps are not contracting (regime violation?)");
    }
  }
  s.phi = std::move(phi);
  s.T_used = T;
  s.cauchy_gap = s.gaps.back();
  s.rate_fit = gap_rate(s.horizons, s.gaps);
  s.residual = bvp.residual;
  s.jacobian_cond = bvp.jacobian_cond;
  s.last = std::move(bvp);
  return s;
}

double manifold_invariance_check(const ManifoldSample& sample, double t_probe, const ManifoldConfig& config) {
  const ProjectorSpec& proj = *config.solver.projector;
  const Integrator integ(config.solver);
  const SpectralField moved = integ.advance(sample.u_plus + sample.phi, steps_for(t_probe, config.solver.dt));
  const ManifoldSample there = phi_of(project(moved, proj, Projector::P_N), config);
  return h_norm(project(moved, proj, Projector::Q_N) - there.phi, -1.0);
}

SpectralField phi_derivative_at(const BvpResult& bvp, const SpectralField& w_plus) {
  require(!bvp.tangent_minus.empty(), "BVP result carries no tangent data");
  require(bvp.basis != nullptr, "BVP result carries no basis");
  const GridPtr& grid = bvp.basis->grid();
  const Index n = bvp.jacobian.rows();
  const Eigen::VectorXd rhs = bvp.basis->coordinates(w_plus);
  const Eigen::VectorXd z = bvp.jacobian.fullPivLu().solve(rhs);
  SpectralField out(grid);
  for (Index j = 0; j < n; ++j) out.coeffs() += z(j) * bvp.tangent_minus[std::size_t(j)].coeffs();
  return out;
}

DerivativeResult phi_derivative(const SpectralField& u_plus, const SpectralField& w_plus,
                                const ManifoldConfig& config) {
  check_config(config);
  check_plus(w_plus, *config.solver.projector, "w_plus");
  DerivativeResult d;
  double T = config.T0;
  BvpResult bvp = solve_bvp(u_plus, T, config);
  SpectralField value = phi_derivative_at(bvp, w_plus);
  d.horizons.push_back(T);
  const double scale = std::max(1.0, h_norm(w_plus, -1.0));
  while (true) {
    const double next = 2.0 * T;
    if (next > config.T_max * (1.0 + 1e-12)) {
      fail(ErrorKind::NoConvergence, "phi_derivative: Cauchy gap still above tolerance at T_max");
    }
    BvpResult nb = solve_bvp(u_plus, next, config, &bvp.y);
    SpectralField nv = phi_derivative_at(nb, w_plus);
    const double gap = h_norm(nv - value, -1.0);
    d.gaps.push_back(gap);
    d.horizons.push_back(next);
    T = next;
    bvp = std::move(nb);
    value = std::move(nv);
    if (gap < config.phi_tol * scale) break;
  }
  d.value = std::move(value);
  d.T_used = T;
  d.cauchy_gap = d.gaps.back();
  return d;
}

TrackingReport tracking_experiment(const SpectralField& u0, const ManifoldConfig& config, double T_max,
                                   double T_extra, double burn_in, int sample_stride) {
  check_config(config);
  require(T_max > 0.0 && T_extra >= 0.0 && burn_in >= 0.0 && sample_stride >= 1,
          "tracking needs T_max > 0, T_extra >= 0, burn_in >= 0, stride >= 1");
  const ProjectorSpec& proj = *config.solver.projector;
  const Integrator integ(config.solver);
  const double dt = config.solver.dt;

  SpectralField u = integ.advance(u0, steps_for(burn_in, dt));
  const long n = steps_for(T_max, dt);
  std::vector<SpectralField> path;
  std::vector<double> times;
  path.push_back(u);
  times.push_back(0.0);
  for (long i = 1; i <= n; ++i) {
    u = integ.step(u);
    if (i % sample_stride == 0 || i == n) {
      path.push_back(u);
      times.push_back(static_cast<double>(i) * dt);
    }
  }

  const BvpResult bvp = solve_bvp(project(u, proj, Projector::P_N), T_max + T_extra, config);
  TrackingReport rep;
  rep.bvp_residual = bvp.residual;
  SpectralField m = integ.advance(bvp.w_init, steps_for(T_extra, dt));
  long at = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const long target = steps_for(times[k], dt);
    m = integ.advance(std::move(m), target - at);
    at = target;
    rep.times.push_back(times[k]);
    rep.distance.push_back(h_norm(path[k] - m, -1.0));
  }

  rep.noise_floor = std::max(100.0 * config.newton_tol, 1e-12);
  std::vector<double> t_fit;
  std::vector<double> d_fit;
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    if (rep.distance[k] <= rep.noise_floor) break;
    t_fit.push_back(rep.times[k]);
    d_fit.push_back(rep.distance[k]);
  }
  rep.fitted_points = static_cast<int>(t_fit.size());
  if (t_fit.size() >= 2) {
    Eigen::MatrixXd X(static_cast<Index>(t_fit.size()), 2);
    Eigen::VectorXd y(static_cast<Index>(t_fit.size()));
    for (std::size_t k = 0; k < t_fit.size(); ++k) {
      X(Index(k), 0) = 1.0;
      X(Index(k), 1) = t_fit[k];
      y(Index(k)) = std::log(d_fit[k]);
    }
    rep.fitted_rate = -X.colPivHouseholderQr().solve(y)(1);
  }
  rep.endpoint_ok = rep.distance.back() <= rep.distance.front();
  return rep;
}

}  // namespace imch

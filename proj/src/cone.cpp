#include "imch/cone.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "imch/error.hpp"

namespace imch {

ConeForm::ConeForm(ProjectorSpec projector, double epsilon)
    : projector_(std::move(projector)), epsilon_(epsilon) {
  require(epsilon >= 0.0 && epsilon < 1.0, "cone epsilon must lie in [0, 1)");
}

std::pair<double, double> ConeForm::split_norms(const SpectralField& xi) const {
  const Mask& p = projector_.mask(Projector::P_N);
  const Eigen::ArrayXd& lam = xi.grid()->eigenvalues();
  const Eigen::VectorXcd& c = xi.coeffs();
  double minus = 0.0;
  double plus = 0.0;
  for (Index f = 1; f < c.size(); ++f) {
    const double e = std::norm(c(f)) / lam(f);
    (p(f) ? plus : minus) += e;
  }
  return {minus, plus};
}

double ConeForm::V(const SpectralField& xi) const {
  const auto [minus, plus] = split_norms(xi);
  return minus - plus;
}

double ConeForm::V_eps(const SpectralField& xi) const {
  return epsilon_ * h_norm_squared(xi, -1.0) + V(xi);
}

double ConeForm::V_eps_split(const SpectralField& xi) const {
  const auto [minus, plus] = split_norms(xi);
  return (1.0 + epsilon_) * minus - (1.0 - epsilon_) * plus;
}

ConeConstants spectral_gap_constants(const ProjectorSpec& projector, double lipschitz) {
  ConeConstants c;
  const double ln = static_cast<double>(projector.lambda_n());
  const double ln1 = static_cast<double>(projector.lambda_n1());
  c.alpha_base = ln * ln1;
  c.alpha = 2.0 * ln * ln1;
  c.mu = 2.0 * (ln1 - ln - lipschitz);
  return c;
}

double alpha_of_u(const SpectralField& u, const NonlinearitySpec& spec, const ProjectorSpec& projector,
                  const CutoffSpec* cutoff) {
  const double ln = static_cast<double>(projector.lambda_n());
  const double base = 2.0 * ln * static_cast<double>(projector.lambda_n1());
  if (cutoff) {
    const double norm_a_plus = h_norm(project(u, projector, Projector::P_N), 2.0);
    if (norm_a_plus > cutoff->r_1()) return 0.75 * base;
  }
  return base - 2.0 * ln * spatial_average_a(u, spec);
}

namespace {

// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    jac(i, i - 1) = b;
    jac(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  Eigen::VectorXd x = (es.eigenvalues().array() + 1.0) * 0.5;
  Eigen::VectorXd w = es.eigenvectors().row(0).transpose().array().square();
  return {x, w};
}

}  // namespace

double averaged_alpha(const SpectralField& u1, const SpectralField& u2, const NonlinearitySpec& spec,
                      const ProjectorSpec& projector, const CutoffSpec* cutoff, int nodes) {
  require(nodes >= 1 && nodes <= 64, "quadrature node count must be in 1..64");
  const auto [x, w] = gauss_legendre(nodes);
  double sum = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const SpectralField us = x(i) * u1 + (1.0 - x(i)) * u2;
    sum += w(i) * alpha_of_u(us, spec, projector, cutoff);
  }
  return sum;
}

double strong_cone_residual(const SpectralField& u, const SpectralField& w, double alpha, double mu,
                            const NonlinearitySpec& spec, const ProjectorSpec& projector) {
  const SpectralField w_plus = project(w, projector, Projector::P_N);
  const SpectralField w_minus = project(w, projector, Projector::Q_N);
  const SpectralField jw = w_minus - w_plus;
  const SpectralField fw = apply_F_prime(u, w, spec);
  return -2.0 * h_inner(fw, jw, 0.0) - 2.0 * h_inner(w, jw, 1.0) +
         alpha * (h_norm_squared(w_minus, -1.0) - h_norm_squared(w_plus, -1.0)) + mu * h_norm_squared(w, 0.0);
}

Eigen::MatrixXd assemble_strong_cone_form(const SpectralField& u, double alpha, double mu,
                                          const NonlinearitySpec& spec, const ProjectorSpec& projector,
                                          const RealBasis& basis) {
  require(basis.grid() == u.grid(), "basis and field live on different grids");
  const Index n = basis.dimension();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  if (!spec.identically_zero) {
    const Eigen::ArrayXd mult = derivative_multiplier(u, spec);
    for (Index j = 0; j < n; ++j) B.col(j) = basis.coordinates(apply_multiplier(mult, basis.basis_vector(j)));
  }
  Eigen::VectorXd J(n);
  Eigen::VectorXd lam(n);
  const double ln = static_cast<double>(projector.lambda_n());
  for (Index i = 0; i < n; ++i) {
    lam(i) = basis.eigenvalue(i);
    J(i) = lam(i) <= ln ? -1.0 : 1.0;
  }
  Eigen::MatrixXd S = -(J.asDiagonal() * B);
  S += S.transpose().eval();
  const Eigen::VectorXd diag =
      (-2.0 * lam.array() * J.array() + alpha * J.array() / lam.array() + mu).matrix();
  S.diagonal() += diag;
  return 0.5 * (S + S.transpose());
}

double max_eigenvalue(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

AlphaFn constant_alpha(double alpha) {
  return [alpha](const SpectralField&, const SpectralField&) { return alpha; };
}

AlphaFn averaged_alpha_fn(NonlinearitySpec spec, ProjectorSpec projector, std::optional<CutoffSpec> cutoff,
                          int nodes) {
  return [spec = std::move(spec), projector = std::move(projector), cutoff = std::move(cutoff), nodes](
             const SpectralField& u1, const SpectralField& u2) {
    return averaged_alpha(u1, u2, spec, projector, cutoff ? &*cutoff : nullptr, nodes);
  };
}

double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& values) {
  require(t.size() == values.size() && t.size() >= 2, "rate fit needs at least two samples");
  const Index n = static_cast<Index>(t.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    require(values[std::size_t(i)] > 0.0, "rate fit needs positive values");
    X(i, 0) = 1.0;
    X(i, 1) = t[std::size_t(i)];
    y(i) = std::log(values[std::size_t(i)]);
  }
  const Eigen::Vector2d beta = X.colPivHouseholderQr().solve(y);
  return -beta(1);
}

MonitorReport monitor_cone_along(const Trajectory& a, const Trajectory& b, const ConeForm& form,
                                 const AlphaFn& alpha, double mu) {
  require(a.times.size() == b.times.size() && a.times.size() >= 2, "trajectories have mismatched time grids");
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    require(std::abs(a.times[i] - b.times[i]) <= 1e-12 * std::max(1.0, std::abs(a.times[i])),
            "trajectories have mismatched time grids");
  }
  MonitorReport rep;
  const std::size_t n = a.times.size();
  std::vector<double> h_norm_sq(n);
  rep.rows.resize(n);
  rep.alpha_minus = std::numeric_limits<double>::infinity();
  rep.alpha_plus = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const SpectralField v = a.states[i] - b.states[i];
    MonitorRow& r = rep.rows[i];
    r.t = a.times[i];
    r.V = form.V(v);
    r.V_eps = form.V_eps(v);
    r.alpha = alpha(a.states[i], b.states[i]);
    r.norm_minus1_sq = h_norm_squared(v, -1.0);
    h_norm_sq[i] = h_norm_squared(v, 0.0);
    rep.alpha_minus = std::min(rep.alpha_minus, r.alpha);
    rep.alpha_plus = std::max(rep.alpha_plus, r.alpha);
  }
  rep.max_defect = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    MonitorRow& r = rep.rows[i];
    if (i == 0 || i + 1 == n) {
      r.defect = std::numeric_limits<double>::quiet_NaN();
    } else {
      const double dv = (rep.rows[i + 1].V - rep.rows[i - 1].V) / (rep.rows[i + 1].t - rep.rows[i - 1].t);
      r.defect = dv + r.alpha * r.V + mu * h_norm_sq[i];
      rep.max_defect = std::max(rep.max_defect, r.defect);
    }
    if (i > 0 && rep.rows[i - 1].V <= 0.0 && r.V > 0.0) ++rep.cone_exits;
  }
  rep.ends_outside_cone = rep.rows.back().V > 0.0;
  const double lambda_1 = 1.0;  // first eigenvalue of A on the 2pi-torus
  rep.predicted_rate = rep.alpha_minus + 0.5 * lambda_1 * mu;
  if (rep.ends_outside_cone) {
    std::vector<double> t;
    std::vector<double> y;
    for (const auto& r : rep.rows) {
      if (r.norm_minus1_sq > 0.0) {
        t.push_back(r.t);
        y.push_back(r.norm_minus1_sq);
      }
    }
    if (t.size() >= 2) rep.fitted_rate = fit_decay_rate(t, y);
  }
  return rep;
}

double epsilon_recipe(double lipschitz, double alpha_plus, double lambda_1, double mu) {
  require(mu > 0.0 && lambda_1 > 0.0, "epsilon recipe needs mu > 0 and lambda_1 > 0");
  return mu / (4.0 * (2.0 * lipschitz + alpha_plus / lambda_1));
}

AveragingResidual spatial_averaging_residual(const SpectralField& u, const NonlinearitySpec& spec,
                                             const ProjectorSpec& projector) {
  const GridPtr& grid = u.grid();
  const Mask& shell = projector.mask(Projector::R_kN);
  std::vector<Index> modes;
  for (Index f : grid->ordered_modes()) {
    if (shell(f)) modes.push_back(f);
  }
  require(!modes.empty(), "the middle shell R_{k,N} is empty");

  AveragingResidual out;
  out.shell_modes = static_cast<Index>(modes.size());
  if (spec.identically_zero) return out;

  const Eigen::VectorXcd w_hat = grid->to_spectral(derivative_multiplier(u, spec));
  out.a = w_hat(0).real();
  const int m = grid->resolution();
  auto wrap = [m](int d) {
    d %= m;
    if (d <= -m / 2) d += m;
    if (d > m / 2) d -= m;
    return d;
  };
  const Index n = out.shell_modes;
  Eigen::MatrixXcd R(n, n);
  for (Index i = 0; i < n; ++i) {
    const LatticePoint li = grid->mode(modes[std::size_t(i)]);
    for (Index j = 0; j < n; ++j) {
      const LatticePoint lj = grid->mode(modes[std::size_t(j)]);
      const LatticePoint d{wrap(li[0] - lj[0]), wrap(li[1] - lj[1]), wrap(li[2] - lj[2])};
      R(i, j) = i == j ? Complex(0.0, 0.0) : w_hat(grid->flat_index(d));
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(R);
  out.norm = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  return out;
}

double verify_cutoff_inequality(const SpectralField& u, const SpectralField& v_plus, const CutoffSpec& cutoff,
                                const ProjectorSpec& projector) {
  const Mask& q = projector.mask(Projector::Q_N);
  for (Index f = 0; f < v_plus.coeffs().size(); ++f) {
    require(!q(f) || v_plus.coeffs()(f) == Complex(0.0, 0.0), "v_plus has components outside H_+");
  }
  const SpectralField u_plus = project(u, projector, Projector::P_N);
  const double eta = h_norm_squared(u_plus, 2.0);
  const double phi = cutoff.phi(eta);
  const double dphi = cutoff.phi_prime(eta);
  const double au_av = h_inner(u_plus, v_plus, 2.0);
  const double av_v = h_norm_squared(v_plus, 1.0);
  const double t_prime = 2.0 * dphi * au_av * au_av + phi * av_v;
  return t_prime - 0.5 * static_cast<double>(projector.lambda_n()) * h_norm_squared(v_plus, 0.0) - 0.5 * av_v;
}

double reflection_gap(const SpectralField& v, const SpectralField& w, const SpectralField& y) {
  const double vy = h_inner(v, y, 0.0);
  const double wy = h_inner(w, y, 0.0);
  return 2.0 * vy * wy - h_norm_squared(y, 0.0) * (h_inner(v, w, 0.0) - h_norm(v, 0.0) * h_norm(w, 0.0));
}

}  // namespace imch

#pragma once

// Cone quadratic forms in H^{-1}, the strong cone residual, the spectral-gap
// constants, the spatial-averaging residual on the middle shell and the
// cut-off inequality for the modified equation.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "imch/cutoff.hpp"
#include "imch/dynamics.hpp"
#include "imch/field.hpp"
#include "imch/nonlinearity.hpp"
#include "imch/projector.hpp"

namespace imch {

/// V(xi) = ||Q_N xi||^2_{H^-1} - ||P_N xi||^2_{H^-1} and V_eps = eps ||xi||^2_{H^-1} + V.
class ConeForm {
 public:
  explicit ConeForm(ProjectorSpec projector, double epsilon = 0.0);

  const ProjectorSpec& projector() const { return projector_; }
  double epsilon() const { return epsilon_; }

  double V(const SpectralField& xi) const;
  double V_eps(const SpectralField& xi) const;
  /// (1 + eps) ||xi_-||^2_{H^-1} - (1 - eps) ||xi_+||^2_{H^-1}; equals V_eps.
  double V_eps_split(const SpectralField& xi) const;
  bool in_cone(const SpectralField& xi) const { return V(xi) <= 0.0; }

  /// (||xi_-||^2_{H^-1}, ||xi_+||^2_{H^-1})
  std::pair<double, double> split_norms(const SpectralField& xi) const;

 private:
  ProjectorSpec projector_;
  double epsilon_;
};

struct ConeConstants {
  double alpha_base = 0.0;  // lambda_N lambda_{N+1}
  double alpha = 0.0;       // 2 lambda_N lambda_{N+1}
  double mu = 0.0;          // 2 (lambda_{N+1} - lambda_N - L)
};

/// Constants under the plain spectral gap; mu <= 0 means the gap is too small for L.
ConeConstants spectral_gap_constants(const ProjectorSpec& projector, double lipschitz);

/// alpha(u) = 2 lambda_N lambda_{N+1} - 2 lambda_N a(u) inside ||A P_N u|| <= R_1
/// (or always, without a cut-off), and 3/4 * 2 lambda_N lambda_{N+1} beyond it.
double alpha_of_u(const SpectralField& u, const NonlinearitySpec& spec, const ProjectorSpec& projector,
                  const CutoffSpec* cutoff = nullptr);

/// int_0^1 alpha(s u1 + (1 - s) u2) ds by Gauss-Legendre with `nodes` points (1..5).
double averaged_alpha(const SpectralField& u1, const SpectralField& u2, const NonlinearitySpec& spec,
                      const ProjectorSpec& projector, const CutoffSpec* cutoff = nullptr, int nodes = 3);

/// -2 (F'(u) w, w_- - w_+) - 2 (A w, w_- - w_+) + alpha (||w_-||^2_{-1} - ||w_+||^2_{-1}) + mu ||w||^2_H.
/// The strong cone condition holds at (u, w) iff the result is <= 0.
double strong_cone_residual(const SpectralField& u, const SpectralField& w, double alpha, double mu,
                            const NonlinearitySpec& spec, const ProjectorSpec& projector);

/// Matrix of the residual's quadratic form in the coordinates of `basis`.
Eigen::MatrixXd assemble_strong_cone_form(const SpectralField& u, double alpha, double mu,
                                          const NonlinearitySpec& spec, const ProjectorSpec& projector,
                                          const RealBasis& basis);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Eigen::MatrixXd& symmetric);

struct MonitorRow {
  double t = 0.0;
  double V = 0.0;
  double V_eps = 0.0;
  double defect = 0.0;  // dV/dt + alpha V + mu ||v||^2_H, centered differences; NaN at the ends
  double alpha = 0.0;
  double norm_minus1_sq = 0.0;
};

struct MonitorReport {
  std::vector<MonitorRow> rows;
  double max_defect = 0.0;
  int cone_exits = 0;          // sample pairs with V <= 0 followed by V > 0
  bool ends_outside_cone = false;
  double alpha_minus = 0.0;    // min of alpha along the run
  double alpha_plus = 0.0;
  double fitted_rate = 0.0;    // decay rate of ||v||^2_{H^-1}, fitted when ends_outside_cone
  double predicted_rate = 0.0; // alpha_minus + lambda_1 mu / 2
};

using AlphaFn = std::function<double(const SpectralField& u1, const SpectralField& u2)>;

AlphaFn constant_alpha(double alpha);
AlphaFn averaged_alpha_fn(NonlinearitySpec spec, ProjectorSpec projector,
                          std::optional<CutoffSpec> cutoff, int nodes);

/// Cone diagnostics for v = a(t) - b(t). Both trajectories must share their time grid.
MonitorReport monitor_cone_along(const Trajectory& a, const Trajectory& b, const ConeForm& form,
                                 const AlphaFn& alpha, double mu);

/// epsilon with (2L + alpha_plus / lambda_1) epsilon = mu / 4.
double epsilon_recipe(double lipschitz, double alpha_plus, double lambda_1, double mu);

/// Least-squares decay rate -d/dt log(values) (values must be positive).
double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& values);

struct AveragingResidual {
  double norm = 0.0;  // || R (f'(u) R v) - a(u) R v || operator norm over the shell
  double a = 0.0;     // <f'(u)>
  Index shell_modes = 0;
};

/// Exact operator norm by dense SVD of the shell block of the multiplier f'(u).
AveragingResidual spatial_averaging_residual(const SpectralField& u, const NonlinearitySpec& spec,
                                             const ProjectorSpec& projector);

/// (T'(u)v, v) - lambda_N/2 ||v||^2_H - (A v, v)/2 for v in H_+, with
/// T(u) = phi(||A P_N u||^2) A P_N u.
double verify_cutoff_inequality(const SpectralField& u, const SpectralField& v_plus, const CutoffSpec& cutoff,
                                const ProjectorSpec& projector);

/// 2 (v,y)(w,y) - ||y||^2 ((v,w) - ||v|| ||w||); nonnegative for every triple.
template <class Vec>
double reflection_gap(const Vec& v, const Vec& w, const Vec& y) {
  return 2.0 * v.dot(y) * w.dot(y) - y.squaredNorm() * (v.dot(w) - v.norm() * w.norm());
}

double reflection_gap(const SpectralField& v, const SpectralField& w, const SpectralField& y);

}  // namespace imch

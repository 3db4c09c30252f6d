#pragma once

// The inertial manifold as a graph Phi: H_+ -> H_-, computed pointwise by the
// backward boundary-value problem
//   P_N u(0) = u_+,   Q_N u(-T) = 0,
// solved by Newton on w = u(-T) in H_+ and continued by doubling T.

#include <memory>
#include <optional>
#include <vector>

#include "imch/dynamics.hpp"

namespace imch {

struct ManifoldConfig {
  SolverConfig solver;           // needs a projector; solver.modified picks the flow
  double newton_tol = 1e-9;      // ||P_N S(T) w - u_+||_{H^-1}
  int max_newton_iters = 40;
  int max_backtracks = 30;
  double condition_limit = 1e12;
  double T0 = 1.0;               // first horizon of the doubling ladder
  double T_max = 16.0;           // last horizon tried
  double phi_tol = 1e-8;         // ||Phi_T - Phi_{T/2}||_{H^-1} accepted as converged
};

struct BvpResult {
  double T = 0.0;
  SpectralField w_init;   // u(-T), lies in H_+
  SpectralField u_final;  // u(0) = S(T) w_init
  double residual = 0.0;  // ||P_N u(0) - u_+||_{H^-1}
  int newton_iters = 0;
  double jacobian_cond = 0.0;  // 2-norm condition of the scaled Jacobian
  std::vector<double> residual_history;
  // Newton unknowns are y with w = D y, D = e^{c lambda^2 T} per coordinate.
  Eigen::VectorXd y;
  Eigen::VectorXd scale;
  std::shared_ptr<const RealBasis> basis;   // real coordinates of H_+
  Eigen::MatrixXd jacobian;                 // d P_N u(0) / dy in H_+ coordinates
  std::vector<SpectralField> tangent_minus; // Q_N of d u(0) / dy_j
};

/// Newton on G_T(w) = P_N S(T) w = u_+. `warm_y` reuses unknowns from a previous
/// horizon (the scaling makes them comparable across T).
BvpResult solve_bvp(const SpectralField& u0_plus, double T, const ManifoldConfig& config,
                    const Eigen::VectorXd* warm_y = nullptr);

struct ManifoldSample {
  SpectralField u_plus;
  SpectralField phi;  // Q_N u(0) at the largest horizon
  double T_used = 0.0;
  double cauchy_gap = 0.0;  // ||phi(T) - phi(T/2)||_{H^-1}
  double rate_fit = 0.0;    // geometric rate of the doubling gaps (per unit T); +inf if they vanish
  double residual = 0.0;
  int newton_iters = 0;
  double jacobian_cond = 0.0;
  std::vector<double> horizons;
  std::vector<double> gaps;  // gaps[i] compares horizons[i+1] with horizons[i]
  BvpResult last;
};

/// Doubling ladder T0, 2 T0, ... until the Cauchy gap drops below phi_tol.
/// no-convergence when T_max is reached or the gaps stop contracting.
ManifoldSample phi_of(const SpectralField& u_plus, const ManifoldConfig& config);

/// ||Q_N S(t) (u + Phi(u)) - Phi(P_N S(t) (u + Phi(u)))||_{H^-1}.
double manifold_invariance_check(const ManifoldSample& sample, double t_probe, const ManifoldConfig& config);

/// Phi'(u_+) w_+ at the horizon of `bvp`: Q_N W(T) z with P_N W(T) z = w_+.
SpectralField phi_derivative_at(const BvpResult& bvp, const SpectralField& w_plus);

struct DerivativeResult {
  SpectralField value;
  double T_used = 0.0;
  double cauchy_gap = 0.0;
  std::vector<double> horizons;
  std::vector<double> gaps;
};

/// Phi'(u_+) w_+ continued over the same doubling ladder as phi_of.
DerivativeResult phi_derivative(const SpectralField& u_plus, const SpectralField& w_plus,
                                const ManifoldConfig& config);

struct TrackingReport {
  std::vector<double> times;
  std::vector<double> distance;  // ||u(t) - u_T(t)||_{H^-1}
  double fitted_rate = 0.0;
  double noise_floor = 0.0;
  int fitted_points = 0;
  double bvp_residual = 0.0;
  bool endpoint_ok = false;  // distance(T_max) <= distance(0)
};

/// Burn-in for `burn_in`, evolve to T_max, then find the manifold trajectory
/// sharing P_N u(T_max) (horizon T_max + T_extra) and fit the decay of the distance.
TrackingReport tracking_experiment(const SpectralField& u0, const ManifoldConfig& config, double T_max,
                                   double T_extra = 4.0, double burn_in = 1.0, int sample_stride = 1);

}  // namespace imch

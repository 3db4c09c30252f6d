#pragma once

// Exponential time differencing for
//   u_t + A^2 u + A F(u) = 0                                  (original flow)
//   u_t + A^2 u + A F(u) + (phi(||A P_N u||^2) - 1) A^2 P_N u = 0   (cut-off flow)
// written as u_t = -A^2 u + N(u). The A^2 part is integrated exactly; N(u) is
// explicit. The variational step is the exact derivative of the discrete map,
// so Newton solves built on it see consistent Jacobians.

#include <optional>
#include <string>
#include <vector>

#include "imch/cutoff.hpp"
#include "imch/field.hpp"
#include "imch/nonlinearity.hpp"
#include "imch/projector.hpp"

namespace imch {

enum class Scheme { ETD1, ETDRK2 };

const char* to_string(Scheme s);
Scheme parse_scheme(const std::string& name);

struct SolverConfig {
  GridPtr grid;
  double dt = 1e-3;
  Scheme scheme = Scheme::ETDRK2;
  double t_end = 1.0;
  int checkpoint_stride = 1;  // keep every n-th state in a Trajectory
  NonlinearitySpec nonlinearity = zero_nonlinearity();
  std::optional<CutoffSpec> cutoff;
  std::optional<ProjectorSpec> projector;
  bool modified = false;           // integrate the cut-off flow (needs cutoff + projector)
  bool allow_unstable_dt = false;  // skip the dt <= 1 / (2 L lambda_max) guard
};

/// 1 / (2 L lambda_max) with lambda_max the largest dealiased eigenvalue; +inf for L = 0.
double stable_dt_limit(const SpectralGrid& grid, double lipschitz);

/// Number of steps covering `t` with step dt; invalid-argument unless t is a
/// multiple of dt (relative tolerance 1e-9).
long steps_for(double t, double dt);

/// Linearization of N at one state, reusable for many directions.
struct PointLinearization {
  Eigen::ArrayXd multiplier;  // f'(u(x)); empty when F == 0
  bool cutoff_term = false;
  double phi = 1.0;
  double phi_prime = 0.0;
  SpectralField a_u_plus;  // A P_N u
};

/// Everything needed to push tangent vectors through one step.
struct StepLinearization {
  PointLinearization at_start;
  PointLinearization at_stage;  // ETDRK2 only
};

class Integrator {
 public:
  explicit Integrator(SolverConfig config);

  const SolverConfig& config() const { return config_; }
  const GridPtr& grid() const { return config_.grid; }
  bool modified() const { return config_.modified; }

  /// N(u) = -A F(u) - (phi - 1) A^2 P_N u (the second term only for the cut-off flow).
  SpectralField nonlinear_term(const SpectralField& u) const;
  /// N'(u) w from a precomputed linearization.
  SpectralField nonlinear_derivative(const PointLinearization& lin, const SpectralField& w) const;
  PointLinearization linearize(const SpectralField& u) const;

  /// One step. When `lin` is given it receives the data needed by step_variational.
  SpectralField step(const SpectralField& u, StepLinearization* lin = nullptr) const;
  SpectralField step_variational(const StepLinearization& lin, const SpectralField& w) const;
  /// Builds the linearization at u (one extra base step for ETDRK2).
  SpectralField step_variational(const SpectralField& u, const SpectralField& w) const;

  SpectralField advance(SpectralField u, long n_steps) const;

 private:
  double eta(const SpectralField& u) const;

  SolverConfig config_;
  Eigen::ArrayXd lambda_;
  Eigen::ArrayXd decay_;  // e^{-lambda^2 dt}
  Eigen::ArrayXd phi1_;   // dt phi_1(-lambda^2 dt)
  Eigen::ArrayXd phi2_;   // dt phi_2(-lambda^2 dt)
};

/// Free-function forms. `step` always integrates the original flow and
/// `step_modified` the cut-off flow, whatever config.modified says.
SpectralField step(const SpectralField& u, const SolverConfig& config);
SpectralField step_modified(const SpectralField& u, const SolverConfig& config);
SpectralField step_variational(const SpectralField& u, const SpectralField& w, const SolverConfig& config);

struct Trajectory {
  std::vector<double> times;
  std::vector<SpectralField> states;
  std::string config_hash;
};

/// Integrates to config.t_end, keeping t = 0, every checkpoint_stride-th step and the end state.
Trajectory evolve(const SpectralField& u0, const SolverConfig& config);
std::pair<Trajectory, Trajectory> evolve_pair(const SpectralField& u0, const SpectralField& v0,
                                              const SolverConfig& config);

struct NormRow {
  double t = 0.0;
  double h_minus1 = 0.0;
  double h0 = 0.0;
  double h2 = 0.0;
  double mean = 0.0;
};

NormRow norm_row(double t, const SpectralField& u);

/// Measured absorbing radius: 1.2 * sup_{t >= t_burn} ||u(t)||_{H^2} along the
/// original flow from u0 up to t_burn + t_run.
double calibrate_r_star(const SpectralField& u0, const SolverConfig& config, double t_burn, double t_run);

}  // namespace imch

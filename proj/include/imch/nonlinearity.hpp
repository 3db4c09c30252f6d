#pragma once

// Scalar nonlinearity f with global bounds |f| + |f''| <= K and |f'| <= L, and
// the Nemytskii operator F(u) = f(u) - <f(u)> evaluated by collocation.

#include <functional>
#include <map>
#include <string>

#include "imch/field.hpp"

namespace imch {

struct NonlinearitySpec {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> f_prime;
  std::function<double(double)> f_second;
  double K = 0.0;
  double L = 0.0;
  bool identically_zero = false;  // lets the integrators skip the transforms
};

NonlinearitySpec zero_nonlinearity();
/// f(u) = amplitude * sin(u); K = 2 amplitude, L = amplitude.
NonlinearitySpec sine_nonlinearity(double amplitude = 1.0);
/// f(u) = c^3 - c with c = U tanh(u / U), a smooth clamp of u^3 - u at |u| ~ U.
NonlinearitySpec saturated_cubic_nonlinearity(double u_max);

/// Lookup by name: "zero", "sine" {amplitude}, "saturated-cubic" {U_max}.
NonlinearitySpec make_nonlinearity(const std::string& name,
                                   const std::map<std::string, double>& params = {});

struct BoundsCheck {
  double max_f = 0.0;
  double max_f_prime = 0.0;
  double max_f_second = 0.0;
  double max_f_plus_f_second = 0.0;
  bool ok = false;
};

/// Dense sampling of f, f', f'' on [lo, hi] against the claimed K and L.
BoundsCheck check_bounds(const NonlinearitySpec& spec, double lo = -20.0, double hi = 20.0,
                         int samples = 40001);

/// F(u) = f(u) - <f(u)>, dealiased. numeric-failure on non-finite samples.
SpectralField apply_F(const SpectralField& u, const NonlinearitySpec& spec);

/// f'(u(x)) on the collocation grid.
Eigen::ArrayXd derivative_multiplier(const SpectralField& u, const NonlinearitySpec& spec);

/// F'(u)v = w v - <w v> for a precomputed multiplier w = f'(u(x)), dealiased.
SpectralField apply_multiplier(const Eigen::ArrayXd& w, const SpectralField& v);

SpectralField apply_F_prime(const SpectralField& u, const SpectralField& v,
                            const NonlinearitySpec& spec);

/// a(u) = <f'(u)>, the grid mean of f'(u(x)).
double spatial_average_a(const SpectralField& u, const NonlinearitySpec& spec);

}  // namespace imch

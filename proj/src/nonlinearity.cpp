#include "imch/nonlinearity.hpp"

#include <cmath>

#include "imch/error.hpp"

namespace imch {

NonlinearitySpec zero_nonlinearity() {
  NonlinearitySpec s;
  s.name = "zero";
  s.f = [](double) { return 0.0; };
  s.f_prime = [](double) { return 0.0; };
  s.f_second = [](double) { return 0.0; };
  s.identically_zero = true;
  return s;
}

NonlinearitySpec sine_nonlinearity(double amplitude) {
  require(std::isfinite(amplitude) && amplitude >= 0.0, "sine amplitude must be finite and >= 0");
  if (amplitude == 0.0) return zero_nonlinearity();
  NonlinearitySpec s;
  s.name = "sine";
  s.f = [amplitude](double x) { return amplitude * std::sin(x); };
  s.f_prime = [amplitude](double x) { return amplitude * std::cos(x); };
  s.f_second = [amplitude](double x) { return -amplitude * std::sin(x); };
  // |a sin| + |a sin| peaks at 2a.
  s.K = 2.0 * amplitude;
  s.L = amplitude;
  return s;
}

NonlinearitySpec saturated_cubic_nonlinearity(double u_max) {
  require(std::isfinite(u_max) && u_max > 0.0, "U_max must be positive");
  const double U = u_max;
  NonlinearitySpec s;
  s.name = "saturated-cubic";
  s.f = [U](double x) {
    const double c = U * std::tanh(x / U);
    return c * c * c - c;
  };
  s.f_prime = [U](double x) {
    const double t = std::tanh(x / U);
    const double c = U * t;
    return (3.0 * c * c - 1.0) * (1.0 - t * t);
  };
  s.f_second = [U](double x) {
    const double t = std::tanh(x / U);
    const double c = U * t;
    const double c1 = 1.0 - t * t;
    const double c2 = -2.0 * t * c1 / U;
    return 6.0 * c * c1 * c1 + (3.0 * c * c - 1.0) * c2;
  };
  // |c| <= U, 0 < c' <= 1, |c''| <= 4 / (3 sqrt3 U).
  const double g1 = std::max(3.0 * U * U - 1.0, 1.0);
  s.L = g1;
  s.K = (U * U * U + U) + (6.0 * U + g1 * 4.0 / (3.0 * std::sqrt(3.0) * U));
  return s;
}

NonlinearitySpec make_nonlinearity(const std::string& name, const std::map<std::string, double>& params) {
  auto get = [&](const char* key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  if (name == "zero") return zero_nonlinearity();
  if (name == "sine") return sine_nonlinearity(get("amplitude", 1.0));
  if (name == "saturated-cubic") return saturated_cubic_nonlinearity(get("U_max", 2.0));
  fail(ErrorKind::InvalidArgument, "unknown nonlinearity '" + name + "'");
}

BoundsCheck check_bounds(const NonlinearitySpec& spec, double lo, double hi, int samples) {
  require(samples >= 2 && hi > lo, "bounds check needs an interval and at least two samples");
  BoundsCheck out;
  for (int i = 0; i < samples; ++i) {
    const double x = lo + (hi - lo) * i / (samples - 1);
    const double f = std::abs(spec.f(x));
    const double f2 = std::abs(spec.f_second(x));
    out.max_f = std::max(out.max_f, f);
    out.max_f_prime = std::max(out.max_f_prime, std::abs(spec.f_prime(x)));
    out.max_f_second = std::max(out.max_f_second, f2);
    out.max_f_plus_f_second = std::max(out.max_f_plus_f_second, f + f2);
  }
  const double slack = 1e-12 * std::max(1.0, spec.K);
  out.ok = out.max_f_plus_f_second <= spec.K + slack && out.max_f_prime <= spec.L + slack;
  return out;
}

namespace {

SpectralField zero_mean_dealiased(const GridPtr& grid, Eigen::ArrayXd values, const char* what) {
  if (!values.allFinite()) fail(ErrorKind::NumericFailure, std::string("non-finite samples in ") + what);
  SpectralField out = SpectralField::from_physical(grid, values);
  out.coeffs()(0) = 0.0;
  return dealias(std::move(out));
}

}  // namespace

SpectralField apply_F(const SpectralField& u, const NonlinearitySpec& spec) {
  if (spec.identically_zero) return SpectralField(u.grid());
  Eigen::ArrayXd x = u.physical();
  if (!x.allFinite()) fail(ErrorKind::NumericFailure, "non-finite field values in F(u)");
  return zero_mean_dealiased(u.grid(), x.unaryExpr(spec.f), "F(u)");
}

Eigen::ArrayXd derivative_multiplier(const SpectralField& u, const NonlinearitySpec& spec) {
  Eigen::ArrayXd x = u.physical();
  if (!x.allFinite()) fail(ErrorKind::NumericFailure, "non-finite field values in f'(u)");
  return x.unaryExpr(spec.f_prime);
}

SpectralField apply_multiplier(const Eigen::ArrayXd& w, const SpectralField& v) {
  return zero_mean_dealiased(v.grid(), w * v.physical(), "F'(u)v");
}

SpectralField apply_F_prime(const SpectralField& u, const SpectralField& v, const NonlinearitySpec& spec) {
  if (spec.identically_zero) return SpectralField(u.grid());
  return apply_multiplier(derivative_multiplier(u, spec), v);
}

double spatial_average_a(const SpectralField& u, const NonlinearitySpec& spec) {
  if (spec.identically_zero) return 0.0;
  return derivative_multiplier(u, spec).mean();
}

}  // namespace imch

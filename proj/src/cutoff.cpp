#include "imch/cutoff.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "imch/error.hpp"

namespace imch {

namespace {

constexpr int kFlatOrder = 4;  // W' vanishes like (1 - s^{2p}), p = kFlatOrder
constexpr double kBlendScale = (2.0 * kFlatOrder + 1.0) / (2.0 * kFlatOrder);

double blend(double t) {
  const double s = 2.0 * t - 1.0;
  const double odd = std::pow(s, 2 * kFlatOrder + 1);
  return kBlendScale * (t - (odd + 1.0) / (2.0 * (2 * kFlatOrder + 1)));
}

double blend_slope(double t) {
  const double s = 2.0 * t - 1.0;
  return kBlendScale * (1.0 - std::pow(s, 2 * kFlatOrder));
}

}  // namespace

CutoffSpec::CutoffSpec(double r_star, double r_1, int check_samples) : r_star_(r_star), r_1_(r_1) {
  if (!(r_star > 0.0) || !std::isfinite(r_star) || !std::isfinite(r_1) || !(r_1 > 2.0 * r_star)) {
    fail(ErrorKind::InvalidConfig, "cut-off needs 0 < 2 R_star < R_1");
  }
  lower_ = 4.0 * r_star * r_star;
  upper_ = r_1 * r_1;
  log_span_ = std::log(upper_ / lower_);
  const CutoffCheck c = verify(check_samples);
  if (!c.ok) {
    std::ostringstream msg;
    msg << "cut-off with R_star=" << r_star << ", R_1=" << r_1 << " violates 1/2 phi + eta phi' > 0 (margin "
        << c.margin << " at eta=" << c.margin_at << "); this blend needs R_1 > 4.37 R_star";
    fail(ErrorKind::InvalidConfig, msg.str());
  }
}

double CutoffSpec::tau(double eta) const { return std::log(eta / lower_) / log_span_; }

double CutoffSpec::phi(double eta) const {
  if (eta <= lower_) return 1.0;
  if (eta >= upper_) return 0.5;
  return std::exp2(-blend(tau(eta)));
}

double CutoffSpec::phi_prime(double eta) const {
  if (eta <= lower_ || eta >= upper_) return 0.0;
  const double t = tau(eta);
  return -std::numbers::ln2 * phi(eta) * blend_slope(t) / (log_span_ * eta);
}

CutoffCheck CutoffSpec::verify(int samples) const {
  require(samples >= 2, "cut-off check needs at least two samples");
  CutoffCheck c;
  c.samples = samples;
  c.margin = std::numeric_limits<double>::infinity();
  c.max_phi_prime = -std::numeric_limits<double>::infinity();
  const double lo = std::log(lower_ / 10.0);
  const double hi = std::log(upper_ * 10.0);
  for (int i = 0; i < samples; ++i) {
    const double eta = std::exp(lo + (hi - lo) * i / (samples - 1));
    const double p = phi(eta);
    const double dp = phi_prime(eta);
    const double m = 0.5 * p + eta * dp;
    if (m < c.margin) {
      c.margin = m;
      c.margin_at = eta;
    }
    c.max_phi_prime = std::max(c.max_phi_prime, dp);
  }
  c.plateau_values_ok = phi(lower_) == 1.0 && phi(0.0) == 1.0 && phi(upper_) == 0.5 &&
                        phi(10.0 * upper_) == 0.5;
  c.ok = c.margin > 0.0 && c.max_phi_prime <= 0.0 && c.plateau_values_ok;
  return c;
}

}  // namespace imch

#pragma once

// Cut-off phi(eta) for the modified equation, eta = ||A P_N u||_H^2:
// phi = 1 for eta <= (2 R_star)^2, phi = 1/2 for eta >= R_1^2, phi' <= 0, and
// 1/2 phi + eta phi' > 0 throughout.
//
// phi = 2^{-W(tau)} with tau = ln(eta / a) / ln(b / a) and a flat-top blend
// W' = c (1 - (2 tau - 1)^8), W(0) = 0, W(1) = 1. Working in log(eta) spreads
// the descent evenly, which is what the positivity constraint wants.

namespace imch {

struct CutoffCheck {
  double margin = 0.0;         // min over the sample grid of 1/2 phi + eta phi'
  double margin_at = 0.0;      // eta where the minimum occurs
  double max_phi_prime = 0.0;  // must be <= 0
  bool plateau_values_ok = false;
  int samples = 0;
  bool ok = false;
};

class CutoffSpec {
 public:
  CutoffSpec() = default;
  /// Fails with invalid-config when the constraints do not hold (checked on
  /// `check_samples` log-spaced points).
  CutoffSpec(double r_star, double r_1, int check_samples = 10000);

  double r_star() const { return r_star_; }
  double r_1() const { return r_1_; }
  double lower() const { return lower_; }  // (2 R_star)^2
  double upper() const { return upper_; }  // R_1^2

  double phi(double eta) const;
  double phi_prime(double eta) const;

  /// Samples [lower/10, 10 upper] log-uniformly.
  CutoffCheck verify(int samples = 10000) const;

 private:
  double tau(double eta) const;

  double r_star_ = 0.0;
  double r_1_ = 0.0;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double log_span_ = 0.0;
};

/// R_1 / R_star used when the configuration does not fix R_1.
inline constexpr double kDefaultR1Factor = 4.5;

}  // namespace imch

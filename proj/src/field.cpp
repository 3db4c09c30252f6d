#include "imch/field.hpp"

#include <cmath>
#include <numbers>

#include "imch/error.hpp"

namespace imch {

SpectralField::SpectralField(GridPtr grid)
    : grid_(std::move(grid)), coeffs_(Eigen::VectorXcd::Zero(grid_->size())) {}

SpectralField::SpectralField(GridPtr grid, Eigen::VectorXcd coeffs)
    : grid_(std::move(grid)), coeffs_(std::move(coeffs)) {
  require(coeffs_.size() == grid_->size(), "coefficient cube does not match the grid");
}

SpectralField SpectralField::from_physical(GridPtr grid, const Eigen::ArrayXd& values) {
  Eigen::VectorXcd c = grid->to_spectral(values);
  return SpectralField(std::move(grid), std::move(c));
}

void SpectralField::set_mode(const LatticePoint& l, Complex value) {
  const Index f = grid_->flat_index(l);
  const Index p = grid_->partner(f);
  if (p == f) value = Complex(value.real(), 0.0);
  coeffs_(f) = value;
  coeffs_(p) = std::conj(value);
}

bool SpectralField::is_hermitian(double tol) const {
  for (Index f = 0; f < coeffs_.size(); ++f) {
    if (std::abs(coeffs_(f) - std::conj(coeffs_(grid_->partner(f)))) > tol) return false;
  }
  return true;
}

bool SpectralField::is_dealiased() const {
  const Mask& m = grid_->dealias_mask();
  for (Index f = 0; f < coeffs_.size(); ++f) {
    if (!m(f) && coeffs_(f) != Complex(0.0, 0.0)) return false;
  }
  return true;
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
  coeffs_ += o.coeffs_;
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
  coeffs_ -= o.coeffs_;
  return *this;
}

SpectralField& SpectralField::operator*=(double s) {
  coeffs_ *= s;
  return *this;
}

SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
SpectralField operator*(double s, SpectralField a) { return a *= s; }
SpectralField operator*(SpectralField a, double s) { return a *= s; }

double h_inner(const SpectralField& u, const SpectralField& v, double s) {
  const Eigen::ArrayXd& lam = u.grid()->eigenvalues();
  const Eigen::VectorXcd& a = u.coeffs();
  const Eigen::VectorXcd& b = v.coeffs();
  double sum = 0.0;
  if (s == 0.0) {
    for (Index f = 1; f < a.size(); ++f) sum += (a(f) * std::conj(b(f))).real();
  } else {
    for (Index f = 1; f < a.size(); ++f) {
      if (lam(f) == 0.0) continue;
      sum += std::pow(lam(f), s) * (a(f) * std::conj(b(f))).real();
    }
  }
  return sum;
}

double h_norm(const SpectralField& u, double s) { return std::sqrt(std::max(0.0, h_inner(u, u, s))); }

SpectralField apply_A_power(const SpectralField& u, double power) {
  SpectralField out = u;
  const Eigen::ArrayXd& lam = u.grid()->eigenvalues();
  Eigen::VectorXcd& c = out.coeffs();
  c(0) = 0.0;
  if (power == 1.0) {
    c.array() *= lam;
  } else if (power == 2.0) {
    c.array() *= lam * lam;
  } else if (power == -1.0) {
    for (Index f = 1; f < c.size(); ++f) c(f) /= lam(f);
  } else {
    for (Index f = 1; f < c.size(); ++f) c(f) *= std::pow(lam(f), power);
  }
  return out;
}

SpectralField dealias(SpectralField u) { return restrict_to(std::move(u), u.grid()->dealias_mask()); }

SpectralField restrict_to(SpectralField u, const Mask& keep) {
  Eigen::VectorXcd& c = u.coeffs();
  for (Index f = 0; f < c.size(); ++f) {
    if (!keep(f)) c(f) = 0.0;
  }
  return u;
}

namespace {

bool is_representative(const LatticePoint& l) {
  for (int c : l) {
    if (c != 0) return c > 0;
  }
  return false;
}

}  // namespace

RealBasis::RealBasis(GridPtr grid, const Mask& modes) : grid_(std::move(grid)) {
  require(modes.size() == grid_->size(), "mode mask does not match the grid");
  for (Index f : grid_->ordered_modes()) {
    if (!modes(f)) continue;
    require(modes(grid_->partner(f)), "real basis needs a mode set closed under l -> -l");
    if (is_representative(grid_->mode(f))) reps_.push_back(f);
  }
}

Eigen::VectorXd RealBasis::coordinates(const SpectralField& u) const {
  Eigen::VectorXd x(dimension());
  for (std::size_t j = 0; j < reps_.size(); ++j) {
    const Complex c = u.coeffs()(reps_[j]);
    x(Index(2 * j)) = std::numbers::sqrt2 * c.real();
    x(Index(2 * j + 1)) = -std::numbers::sqrt2 * c.imag();
  }
  return x;
}

SpectralField RealBasis::field(const Eigen::VectorXd& coords) const {
  require(coords.size() == dimension(), "coordinate vector has the wrong dimension");
  SpectralField u(grid_);
  Eigen::VectorXcd& c = u.coeffs();
  for (std::size_t j = 0; j < reps_.size(); ++j) {
    const Complex v(coords(Index(2 * j)) / std::numbers::sqrt2, -coords(Index(2 * j + 1)) / std::numbers::sqrt2);
    c(reps_[j]) = v;
    c(grid_->partner(reps_[j])) = std::conj(v);
  }
  return u;
}

SpectralField RealBasis::basis_vector(Index i) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dimension());
  e(i) = 1.0;
  return field(e);
}

}  // namespace imch

#pragma once

// Zero-mean real periodic fields on [0, 2pi)^3 stored as Hermitian Fourier
// coefficient cubes, with the inner product (u, v) = (2pi)^{-3} int u v dx so
// that every e^{il.x} has unit norm and ||u||_{H^s}^2 = sum |l|^{2s} |u_l|^2.

#include <Eigen/Dense>

#include "imch/spectral_grid.hpp"

namespace imch {

class SpectralField {
 public:
  SpectralField() = default;
  /// Zero field on the grid.
  explicit SpectralField(GridPtr grid);
  SpectralField(GridPtr grid, Eigen::VectorXcd coeffs);

  static SpectralField from_physical(GridPtr grid, const Eigen::ArrayXd& values);

  const GridPtr& grid() const { return grid_; }
  int resolution() const { return grid_->resolution(); }
  const Eigen::VectorXcd& coeffs() const { return coeffs_; }
  Eigen::VectorXcd& coeffs() { return coeffs_; }

  Complex at(const LatticePoint& l) const { return coeffs_(grid_->flat_index(l)); }
  /// Sets u_l and u_{-l} = conj(value) together.
  void set_mode(const LatticePoint& l, Complex value);

  Eigen::ArrayXd physical() const { return grid_->to_physical(coeffs_); }
  /// Mean value <u>, i.e. the zero-mode coefficient.
  double mean() const { return coeffs_(0).real(); }

  bool is_hermitian(double tol = 0.0) const;
  bool is_dealiased() const;
  bool all_finite() const { return coeffs_.allFinite(); }

  SpectralField& operator+=(const SpectralField& o);
  SpectralField& operator-=(const SpectralField& o);
  SpectralField& operator*=(double s);

 private:
  GridPtr grid_;
  Eigen::VectorXcd coeffs_;
};

SpectralField operator+(SpectralField a, const SpectralField& b);
SpectralField operator-(SpectralField a, const SpectralField& b);
SpectralField operator*(double s, SpectralField a);
SpectralField operator*(SpectralField a, double s);

/// sum_{l != 0} |l|^{2s} Re(u_l conj(v_l)).
double h_inner(const SpectralField& u, const SpectralField& v, double s);
double h_norm(const SpectralField& u, double s);
inline double h_norm_squared(const SpectralField& u, double s) { return h_inner(u, u, s); }

/// A^p u: multiplies u_l by |l|^{2p}. The zero mode is mapped to zero.
SpectralField apply_A_power(const SpectralField& u, double power);
inline SpectralField apply_A(const SpectralField& u) { return apply_A_power(u, 1.0); }
inline SpectralField apply_A_inv(const SpectralField& u) { return apply_A_power(u, -1.0); }
inline SpectralField apply_A_square(const SpectralField& u) { return apply_A_power(u, 2.0); }

/// Zero outside the 2/3-rule mask.
SpectralField dealias(SpectralField u);
/// Coefficients outside `keep` set to zero.
SpectralField restrict_to(SpectralField u, const Mask& keep);

/// Orthonormal real coordinates on a set of modes closed under l -> -l:
/// for each representative l (first nonzero component positive), the pair
/// (sqrt2 cos(l.x), sqrt2 sin(l.x)). Coordinates follow grid.ordered_modes().
class RealBasis {
 public:
  RealBasis(GridPtr grid, const Mask& modes);

  Index dimension() const { return Index(2 * reps_.size()); }
  const GridPtr& grid() const { return grid_; }
  /// Eigenvalue |l|^2 attached to coordinate i.
  double eigenvalue(Index i) const { return grid_->eigenvalues()(reps_[std::size_t(i / 2)]); }

  Eigen::VectorXd coordinates(const SpectralField& u) const;
  SpectralField field(const Eigen::VectorXd& coords) const;
  /// The i-th basis function as a field.
  SpectralField basis_vector(Index i) const;

 private:
  GridPtr grid_;
  std::vector<Index> reps_;
};

}  // namespace imch

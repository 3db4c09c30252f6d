#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include "imch/lattice.hpp"

namespace imch {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Fourier modes l with -M/2 < l_i <= M/2 stored as a flat cube in FFT order,
/// together with the collocation grid x_j = 2 pi j / M and the 2/3-rule mask.
/// Immutable after construction; share via shared_ptr across fields and threads.
class SpectralGrid {
 public:
  static std::shared_ptr<const SpectralGrid> make(int resolution);

  ~SpectralGrid();
  SpectralGrid(const SpectralGrid&) = delete;
  SpectralGrid& operator=(const SpectralGrid&) = delete;

  int resolution() const { return m_; }
  Index size() const { return size_; }

  /// Largest |l_i| kept by the dealias mask, floor((M - 1) / 3).
  int dealias_cutoff() const { return cutoff_; }
  /// Every eigenspace with value <= this is fully resolved by the mask.
  std::int64_t complete_value() const { return std::int64_t{cutoff_} * cutoff_; }

  LatticePoint mode(Index flat) const { return modes_[static_cast<std::size_t>(flat)]; }
  /// Flat index of l; l must satisfy -M/2 < l_i <= M/2.
  Index flat_index(const LatticePoint& l) const;
  /// Flat index of -l (the Hermitian partner).
  Index partner(Index flat) const { return partner_[static_cast<std::size_t>(flat)]; }
  bool contains(const LatticePoint& l) const;

  /// |l|^2 per flat index (0 at the zero mode).
  const Eigen::ArrayXd& eigenvalues() const { return lambda_; }
  std::int64_t lambda(Index flat) const { return lambda_int_[static_cast<std::size_t>(flat)]; }
  const Mask& dealias_mask() const { return dealias_; }

  /// Dealiased nonzero modes ordered by (|l|^2, l1, l2, l3): position p holds
  /// the mode numbered p + 1 in lambda_1 <= lambda_2 <= ... .
  const std::vector<Index>& ordered_modes() const { return ordered_; }

  /// Inverse transform: u(x_j) = sum_l u_l e^{i l.x_j}. Input must be Hermitian.
  Eigen::ArrayXd to_physical(const Eigen::VectorXcd& coeffs) const;
  /// Forward transform: u_l = M^{-3} sum_j u(x_j) e^{-i l.x_j}; exactly Hermitian output.
  Eigen::VectorXcd to_spectral(const Eigen::ArrayXd& values) const;

  /// Physical coordinate of grid point j along one axis.
  double coordinate(int j) const;

 private:
  explicit SpectralGrid(int resolution);

  struct Plans;

  int m_;
  int cutoff_;
  Index size_;
  std::vector<LatticePoint> modes_;
  std::vector<Index> partner_;
  std::vector<std::int64_t> lambda_int_;
  Eigen::ArrayXd lambda_;
  Mask dealias_;
  std::vector<Index> ordered_;
  std::unique_ptr<Plans> plans_;
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

}  // namespace imch

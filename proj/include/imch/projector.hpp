#pragma once

// Spectral projectors at cut index N with a middle shell of half-width k:
//   P_{k,N}: lambda < lambda_N - k,  R_{k,N}: |lambda - lambda_N| <= k,
//   Q_{k,N}: lambda > lambda_N + k,  P_N: lambda <= lambda_N,  Q_N = I - P_N,
//   tilde-P = R P_N,  tilde-Q = R Q_N.
// All are coefficient masks, so the algebra between them is exact.

#include <array>
#include <cstdint>

#include "imch/field.hpp"

namespace imch {

enum class Projector { P_N, Q_N, P_kN, Q_kN, R_kN, tildeP, tildeQ };

const char* to_string(Projector which);

class ProjectorSpec {
 public:
  ProjectorSpec() = default;
  /// N_index is a 1-based mode index that must end a multiplicity block, with
  /// lambda_{N+1} and lambda_N + k inside the fully resolved range of the grid.
  ProjectorSpec(GridPtr grid, std::int64_t n_index, double k = 0.0);

  const GridPtr& grid() const { return grid_; }
  std::int64_t n_index() const { return n_index_; }
  std::int64_t lambda_n() const { return lambda_n_; }
  std::int64_t lambda_n1() const { return lambda_n1_; }
  std::int64_t theta() const { return lambda_n1_ - lambda_n_; }
  double k() const { return k_; }

  const Mask& mask(Projector which) const { return masks_[static_cast<std::size_t>(which)]; }
  /// Number of complex modes kept by a projector.
  Index count(Projector which) const { return mask(which).count(); }

 private:
  GridPtr grid_;
  std::int64_t n_index_ = 0;
  std::int64_t lambda_n_ = 0;
  std::int64_t lambda_n1_ = 0;
  double k_ = 0.0;
  std::array<Mask, 7> masks_;
};

/// Mode index N whose block ends at eigenvalue `value` on this grid.
std::int64_t index_of_value(const SpectralGrid& grid, std::int64_t value);

SpectralField project(const SpectralField& u, const ProjectorSpec& spec, Projector which);

}  // namespace imch

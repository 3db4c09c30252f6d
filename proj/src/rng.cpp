#include "imch/rng.hpp"

#include "imch/error.hpp"

namespace imch {

namespace {

bool is_representative(const LatticePoint& l) {
  for (int c : l) {
    if (c != 0) return c > 0;
  }
  return false;
}

}  // namespace

SpectralField random_field(const GridPtr& grid, const Mask& modes, double amplitude, double decay,
                           CounterRng& rng) {
  require(modes.size() == grid->size(), "mode mask does not match the grid");
  SpectralField u(grid);
  Eigen::VectorXcd& c = u.coeffs();
  // Walk modes in the canonical order so the draw sequence is grid-independent.
  for (Index f : grid->ordered_modes()) {
    if (!modes(f) || !is_representative(grid->mode(f))) continue;
    const Index p = grid->partner(f);
    const double scale = amplitude * std::pow(grid->eigenvalues()(f), -decay) / std::numbers::sqrt2;
    const double re = rng.normal();
    const double im = rng.normal();
    c(f) = Complex(scale * re, scale * im);
    c(p) = std::conj(c(f));
  }
  return u;
}

}  // namespace imch

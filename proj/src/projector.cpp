#include "imch/projector.hpp"

#include <string>

#include "imch/error.hpp"

namespace imch {

const char* to_string(Projector which) {
  switch (which) {
    case Projector::P_N: return "P_N";
    case Projector::Q_N: return "Q_N";
    case Projector::P_kN: return "P_kN";
    case Projector::Q_kN: return "Q_kN";
    case Projector::R_kN: return "R_kN";
    case Projector::tildeP: return "tildeP";
    case Projector::tildeQ: return "tildeQ";
  }
  return "?";
}

ProjectorSpec::ProjectorSpec(GridPtr grid, std::int64_t n_index, double k)
    : grid_(std::move(grid)), n_index_(n_index), k_(k) {
  require(k >= 0.0, "shell half-width k must be >= 0");
  const auto& ordered = grid_->ordered_modes();
  require(n_index >= 1 && n_index < static_cast<std::int64_t>(ordered.size()),
          "N_index " + std::to_string(n_index) + " exceeds the modes resolved at M=" +
              std::to_string(grid_->resolution()));
  lambda_n_ = grid_->lambda(ordered[static_cast<std::size_t>(n_index - 1)]);
  lambda_n1_ = grid_->lambda(ordered[static_cast<std::size_t>(n_index)]);
  require(lambda_n1_ > lambda_n_, "N_index " + std::to_string(n_index) +
                                      " splits the eigenspace of lambda=" + std::to_string(lambda_n_));
  require(lambda_n1_ <= grid_->complete_value(),
          "lambda_{N+1} is not fully resolved at M=" + std::to_string(grid_->resolution()));
  require(static_cast<double>(lambda_n_) + k <= static_cast<double>(grid_->complete_value()),
          "shell lambda_N + k is not fully resolved at M=" + std::to_string(grid_->resolution()));

  const Index n = grid_->size();
  const Eigen::ArrayXd& lam = grid_->eigenvalues();
  const double ln = static_cast<double>(lambda_n_);
  for (auto& m : masks_) m = Mask::Constant(n, false);
  auto set = [&](Projector p, Index f) { masks_[static_cast<std::size_t>(p)](f) = true; };
  for (Index f = 1; f < n; ++f) {
    const double l = lam(f);
    const bool low = l <= ln;
    set(low ? Projector::P_N : Projector::Q_N, f);
    if (l < ln - k) {
      set(Projector::P_kN, f);
    } else if (l > ln + k) {
      set(Projector::Q_kN, f);
    } else {
      set(Projector::R_kN, f);
      set(low ? Projector::tildeP : Projector::tildeQ, f);
    }
  }
}

std::int64_t index_of_value(const SpectralGrid& grid, std::int64_t value) {
  const auto& ordered = grid.ordered_modes();
  require(value >= 1 && value <= grid.complete_value(),
          "eigenvalue " + std::to_string(value) + " is not fully resolved at M=" +
              std::to_string(grid.resolution()));
  std::int64_t last = 0;
  for (std::size_t p = 0; p < ordered.size(); ++p) {
    const std::int64_t v = grid.lambda(ordered[p]);
    if (v == value) last = static_cast<std::int64_t>(p) + 1;
    if (v > value) break;
  }
  require(last > 0, std::to_string(value) + " is not a sum of three squares");
  return last;
}

SpectralField project(const SpectralField& u, const ProjectorSpec& spec, Projector which) {
  require(u.grid() == spec.grid(), "projector and field live on different grids");
  return restrict_to(u, spec.mask(which));
}

}  // namespace imch

#include "imch/spectral_grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "imch/error.hpp"

namespace imch {

namespace {

// FFTW planning is not thread-safe; execution on new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

int wrap(int l, int m) { return l >= 0 ? l : l + m; }

int unwrap(int i, int m) { return i <= m / 2 ? i : i - m; }

}  // namespace

struct SpectralGrid::Plans {
  fftw_plan forward = nullptr;   // r2c
  fftw_plan backward = nullptr;  // c2r
  Index half_size = 0;
};

std::shared_ptr<const SpectralGrid> SpectralGrid::make(int resolution) {
  static std::mutex cache_mutex;
  static std::map<int, std::weak_ptr<const SpectralGrid>> cache;
  std::lock_guard lock(cache_mutex);
  if (auto it = cache.find(resolution); it != cache.end()) {
    if (auto existing = it->second.lock()) return existing;
  }
  std::shared_ptr<const SpectralGrid> grid(new SpectralGrid(resolution));
  cache[resolution] = grid;
  return grid;
}

SpectralGrid::SpectralGrid(int resolution) : m_(resolution) {
  require(resolution >= 4 && resolution % 2 == 0, "resolution M must be even and >= 4");
  cutoff_ = (m_ - 1) / 3;
  size_ = Index{m_} * m_ * m_;
  const auto n = static_cast<std::size_t>(size_);
  modes_.resize(n);
  partner_.resize(n);
  lambda_int_.resize(n);
  lambda_.resize(size_);
  dealias_.resize(size_);

  for (int i1 = 0; i1 < m_; ++i1) {
    for (int i2 = 0; i2 < m_; ++i2) {
      for (int i3 = 0; i3 < m_; ++i3) {
        const Index f = (Index{i1} * m_ + i2) * m_ + i3;
        const LatticePoint l{unwrap(i1, m_), unwrap(i2, m_), unwrap(i3, m_)};
        modes_[f] = l;
        lambda_int_[f] = squared_norm(l);
        lambda_(f) = static_cast<double>(lambda_int_[f]);
        dealias_(f) = std::abs(l[0]) <= cutoff_ && std::abs(l[1]) <= cutoff_ && std::abs(l[2]) <= cutoff_;
        partner_[f] = (Index{(m_ - i1) % m_} * m_ + (m_ - i2) % m_) * m_ + (m_ - i3) % m_;
      }
    }
  }

  for (Index f = 0; f < size_; ++f) {
    if (dealias_(f) && lambda_int_[f] > 0) ordered_.push_back(f);
  }
  std::sort(ordered_.begin(), ordered_.end(), [this](Index a, Index b) {
    if (lambda_int_[a] != lambda_int_[b]) return lambda_int_[a] < lambda_int_[b];
    return modes_[a] < modes_[b];
  });

  plans_ = std::make_unique<Plans>();
  plans_->half_size = Index{m_} * m_ * (m_ / 2 + 1);
  std::lock_guard lock(planner_mutex());
  double* real = fftw_alloc_real(static_cast<std::size_t>(size_));
  fftw_complex* half = fftw_alloc_complex(static_cast<std::size_t>(plans_->half_size));
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->forward = fftw_plan_dft_r2c_3d(m_, m_, m_, real, half, flags);
  plans_->backward = fftw_plan_dft_c2r_3d(m_, m_, m_, half, real, flags);
  fftw_free(real);
  fftw_free(half);
  if (plans_->forward == nullptr || plans_->backward == nullptr) {
    fail(ErrorKind::NumericFailure, "FFTW planning failed");
  }
}

SpectralGrid::~SpectralGrid() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->backward) fftw_destroy_plan(plans_->backward);
}

Index SpectralGrid::flat_index(const LatticePoint& l) const {
  require(contains(l), "lattice point outside the resolved cube");
  return (Index{wrap(l[0], m_)} * m_ + wrap(l[1], m_)) * m_ + wrap(l[2], m_);
}

bool SpectralGrid::contains(const LatticePoint& l) const {
  for (int c : l) {
    if (c <= -m_ / 2 || c > m_ / 2) return false;
  }
  return true;
}

double SpectralGrid::coordinate(int j) const {
  return 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m_);
}

Eigen::ArrayXd SpectralGrid::to_physical(const Eigen::VectorXcd& coeffs) const {
  require(coeffs.size() == size_, "coefficient cube has the wrong size");
  const int h = m_ / 2 + 1;
  Eigen::VectorXcd half(plans_->half_size);
  for (Index row = 0; row < Index{m_} * m_; ++row) {
    half.segment(row * h, h) = coeffs.segment(row * m_, h);
  }
  Eigen::ArrayXd out(size_);
  fftw_execute_dft_c2r(plans_->backward, reinterpret_cast<fftw_complex*>(half.data()), out.data());
  return out;
}

Eigen::VectorXcd SpectralGrid::to_spectral(const Eigen::ArrayXd& values) const {
  require(values.size() == size_, "physical array has the wrong size");
  const int h = m_ / 2 + 1;
  Eigen::ArrayXd in = values;  // r2c may not preserve input alignment assumptions
  Eigen::VectorXcd half(plans_->half_size);
  fftw_execute_dft_r2c(plans_->forward, in.data(), reinterpret_cast<fftw_complex*>(half.data()));

  Eigen::VectorXcd out(size_);
  const double scale = 1.0 / static_cast<double>(size_);
  for (Index row = 0; row < Index{m_} * m_; ++row) {
    out.segment(row * m_, h) = half.segment(row * h, h) * scale;
  }
  // Fill the redundant half and symmetrize so that u_{-l} == conj(u_l) bitwise.
  for (Index f = 0; f < size_; ++f) {
    const Index p = partner_[f];
    const int i3 = static_cast<int>(f % m_);
    if (i3 > m_ / 2) continue;
    if (p == f) {
      out(f) = Complex(out(f).real(), 0.0);
    } else if (static_cast<int>(p % m_) > m_ / 2) {
      out(p) = std::conj(out(f));
    } else if (f < p) {
      const Complex avg = 0.5 * (out(f) + std::conj(out(p)));
      out(f) = avg;
      out(p) = std::conj(avg);
    }
  }
  return out;
}

}  // namespace imch

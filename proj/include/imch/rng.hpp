#pragma once

// Counter-based random numbers: draw i of stream s under seed k is a pure
// function of (k, s, i), so results do not depend on the platform's <random>
// distributions or on how work is split across threads.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "imch/field.hpp"

namespace imch {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next_u64() { return splitmix64(key_ + counter_++ * 0xd1b54a32d192ed03ULL); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by Box-Muller; one draw per call, no cached spare.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent generator for sub-task i (e.g. Monte-Carlo sample i).
  CounterRng split(std::uint64_t i) const { return CounterRng(key_, i + 1); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Gaussian random Hermitian field on the modes of `modes` (zero mode and
/// non-representable modes excluded): u_l = amplitude * lambda^{-decay} * (g1 + i g2) / sqrt2.
SpectralField random_field(const GridPtr& grid, const Mask& modes, double amplitude, double decay,
                           CounterRng& rng);

}  // namespace imch

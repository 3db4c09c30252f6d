#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's enumeration, transforms or integrators.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

/// Legendre's three-square theorem: v is a sum of three squares iff v != 4^a (8b + 7).
inline bool three_squares_criterion(std::int64_t v) {
  if (v < 0) return false;
  if (v == 0) return true;
  while (v % 4 == 0) v /= 4;
  return v % 8 != 7;
}

/// Count of l in Z^3 with |l|^2 == v, by scanning the cube |l_i| <= ceil(sqrt v).
inline std::int64_t brute_multiplicity(std::int64_t v) {
  const int r = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(v)))) + 1;
  std::int64_t count = 0;
  for (int a = -r; a <= r; ++a)
    for (int b = -r; b <= r; ++b)
      for (int c = -r; c <= r; ++c)
        if (std::int64_t{a} * a + std::int64_t{b} * b + std::int64_t{c} * c == v) ++count;
  return count;
}

struct Point {
  int a, b, c;
};

/// Shell members from a full cube scan, then every pair compared.
inline bool brute_shell_separated(std::int64_t n_value, double k, double r) {
  const double lo = static_cast<double>(n_value) - k;
  const double hi = static_cast<double>(n_value) + k;
  const int R = static_cast<int>(std::ceil(std::sqrt(hi))) + 1;
  std::vector<Point> shell;
  for (int a = -R; a <= R; ++a)
    for (int b = -R; b <= R; ++b)
      for (int c = -R; c <= R; ++c) {
        const double v = double(a) * a + double(b) * b + double(c) * c;
        if (v != 0.0 && v >= lo && v <= hi) shell.push_back({a, b, c});
      }
  for (std::size_t i = 0; i < shell.size(); ++i)
    for (std::size_t j = 0; j < shell.size(); ++j) {
      if (i == j) continue;
      const double d0 = shell[i].a - shell[j].a;
      const double d1 = shell[i].b - shell[j].b;
      const double d2 = shell[i].c - shell[j].c;
      if (d0 * d0 + d1 * d1 + d2 * d2 <= r * r) return false;
    }
  return true;
}

/// u_l = M^{-3} sum_j u(x_j) e^{-i l.x_j}, evaluated term by term.
inline std::complex<double> direct_dft(const std::vector<double>& values, int m, int l1, int l2, int l3) {
  std::complex<double> s = 0.0;
  const double w = 2.0 * std::numbers::pi / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const double phase = -w * (l1 * i + l2 * j + l3 * k);
        s += values[(std::size_t(i) * m + j) * m + k] * std::complex<double>(std::cos(phase), std::sin(phase));
      }
  return s / double(m * m * m);
}

/// u(x_j) = sum over the given modes of c e^{i l.x_j} + conj, on an M^3 grid.
struct Mode {
  int l1, l2, l3;
  std::complex<double> c;
};

inline std::vector<double> synthesize(const std::vector<Mode>& modes, int m) {
  std::vector<double> out(std::size_t(m) * m * m, 0.0);
  const double w = 2.0 * std::numbers::pi / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        double s = 0.0;
        for (const auto& md : modes) {
          const double phase = w * (md.l1 * i + md.l2 * j + md.l3 * k);
          s += 2.0 * (md.c * std::complex<double>(std::cos(phase), std::sin(phase))).real();
        }
        out[(std::size_t(i) * m + j) * m + k] = s;
      }
  return out;
}

/// Scalar ETD1 / ETDRK2 for y' = -c y + g(y) with g linear: g(y) = -b y.
/// Used as the modewise oracle for linear frozen-coefficient flows.
inline double etd1_linear(double y, double c, double b, double dt) {
  const double z = -c * dt;
  const double phi1 = z == 0.0 ? 1.0 : std::expm1(z) / z;
  return std::exp(z) * y + dt * phi1 * (-b * y);
}

inline double etdrk2_linear(double y, double c, double b, double dt) {
  const double z = -c * dt;
  const double phi1 = z == 0.0 ? 1.0 : std::expm1(z) / z;
  const double phi2 = z == 0.0 ? 0.5 : (std::expm1(z) - z) / (z * z);
  const double a = std::exp(z) * y + dt * phi1 * (-b * y);
  return a + dt * phi2 * (-b * a + b * y);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle

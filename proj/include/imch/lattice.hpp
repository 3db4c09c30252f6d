#pragma once

// Spectrum of the zero-mean Laplacian on the 3D torus: eigenvalues are the
// integers |l|^2, l in Z^3 \ {0}. Everything here is exact integer arithmetic
// except the gap-condition bookkeeping, which is floating point by nature.

#include <array>
#include <cstdint>
#include <vector>

namespace imch {

using LatticePoint = std::array<int, 3>;

struct LatticeMode {
  LatticePoint l{};
  std::int64_t lambda = 0;
};

inline std::int64_t squared_norm(const LatticePoint& l) {
  return std::int64_t{l[0]} * l[0] + std::int64_t{l[1]} * l[1] +
         std::int64_t{l[2]} * l[2];
}

struct EigenvalueEntry {
  std::int64_t value = 0;
  std::int64_t multiplicity = 0;
  std::int64_t first_index = 0;  // 1-based position of the first mode with this value

  std::int64_t last_index() const { return first_index + multiplicity - 1; }
};

/// Distinct eigenvalues up to a cap, with multiplicities and the 1-based mode
/// numbering lambda_1 <= lambda_2 <= ... .
class EigenvalueTable {
 public:
  EigenvalueTable() = default;
  EigenvalueTable(std::int64_t max_value, std::vector<EigenvalueEntry> entries);

  std::int64_t max_value() const { return max_value_; }
  const std::vector<EigenvalueEntry>& entries() const { return entries_; }
  std::int64_t total_modes() const { return total_modes_; }
  bool empty() const { return entries_.empty(); }

  /// lambda_n for a 1-based mode index n; invalid-argument when out of range.
  std::int64_t value_at(std::int64_t index) const;
  /// Entry whose index block contains n.
  const EigenvalueEntry& entry_at(std::int64_t index) const;
  /// Entry for an eigenvalue, or nullptr when v is not an eigenvalue <= cap.
  const EigenvalueEntry* find_value(std::int64_t value) const;
  /// Value -> index convention used by the projectors: last index of the block.
  std::int64_t last_index_of_value(std::int64_t value) const;

 private:
  std::int64_t max_value_ = 0;
  std::int64_t total_modes_ = 0;
  std::vector<EigenvalueEntry> entries_;
};

EigenvalueTable enumerate_eigenvalues(std::int64_t max_value);

/// All l with |l|^2 == value, ordered lexicographically by (l1, l2, l3).
std::vector<LatticeMode> modes_with_value(std::int64_t value);

/// Modes with lo <= |l|^2 <= hi, l != 0, ordered by (|l|^2, l) lexicographically.
std::vector<LatticeMode> modes_in_range(std::int64_t lo, std::int64_t hi);

/// Block-end indices N with lambda_{N+1} - lambda_N >= rho. The last block of
/// the table has no known successor and is never reported.
std::vector<std::int64_t> gap_positions(const EigenvalueTable& table, double rho);

/// Shell C^k_N = { l : N - k <= |l|^2 <= N + k } for an eigenvalue VALUE N.
std::vector<LatticeMode> shell_modes(std::int64_t n_value, double k);

struct ShellSeparation {
  bool separated = true;
  bool empty_shell = false;  // vacuous truth; callers may want to warn
  std::size_t shell_size = 0;
  // First offending pair (|l - m| <= r) when not separated.
  LatticePoint witness_a{};
  LatticePoint witness_b{};
};

/// Exhaustive pairwise check of (C^k_N - C^k_N) intersect B_r == {0}.
ShellSeparation check_shell_separation(std::int64_t n_value, double k, double r);

inline bool shell_separation_holds(std::int64_t n_value, double k, double r) {
  return check_shell_separation(n_value, k, r).separated;
}

struct AdmissibleN {
  std::int64_t n_index = 0;
  std::int64_t n_value = 0;

  friend bool operator==(const AdmissibleN&, const AdmissibleN&) = default;
};

/// Eigenvalues N <= max_value with a gap of at least rho above their block and
/// a separated shell. Never claims anything beyond the cap.
std::vector<AdmissibleN> search_admissible_n(double k, double r, double rho,
                                             std::int64_t max_value);

struct GapTerms {
  double delta = 0.0;
  double lipschitz_shell = 0.0;     // 2 L k / (lambda_N - k)
  double lipschitz_quadratic = 0.0; // 2 L^2 / (k - 4L)
  double lipschitz_low = 0.0;       // 2 L^2 lambda_N / ((2 lambda_N - k) k - 4 L lambda_N)

  double sum() const { return delta + lipschitz_shell + lipschitz_quadratic + lipschitz_low; }
};

struct GapReport {
  std::int64_t n_index = 0;
  std::int64_t lambda_n = 0;
  std::int64_t lambda_n1 = 0;
  std::int64_t theta = 0;
  double k = 0.0;
  double lipschitz = 0.0;
  double delta = 0.0;
  GapTerms terms;
  double mu = 0.0;  // 2 * (theta/2 - terms.sum()); meaningful when prerequisites hold
  bool lambda_exceeds_k = false;        // lambda_N > k
  bool k_exceeds_4l = false;            // k > 4L
  bool quadratic_prerequisite = false;  // (2 lambda_N - k) k > 4 L lambda_N
  bool lambda_exceeds_2l = false;       // lambda_N > 2L
  bool satisfied = false;
};

GapReport evaluate_gap_condition(std::int64_t n_index, double k, double lipschitz,
                                 double delta, const EigenvalueTable& table);

/// Large-lambda_N form of the gap condition: rho/2 - (delta + 2L^2/(k-4L) + L^2/(k-2L)).
double asymptotic_gap_margin(double rho, double lipschitz, double delta, double k);

/// Shell half-width k = 4L + 12 L^2 / rho suggested for the asymptotic regime.
inline double recommended_half_width(double lipschitz, double rho) {
  return 4.0 * lipschitz + 12.0 * lipschitz * lipschitz / rho;
}

}  // namespace imch

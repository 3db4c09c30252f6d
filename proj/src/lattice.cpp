#include "imch/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "imch/error.hpp"

namespace imch {

namespace {

std::int64_t isqrt(std::int64_t v) {
  if (v <= 0) return 0;
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

// Smallest c >= 0 with c*c >= v.
std::int64_t ceil_sqrt(std::int64_t v) {
  if (v <= 0) return 0;
  std::int64_t r = isqrt(v);
  return r * r == v ? r : r + 1;
}

bool lex_less(const LatticeMode& a, const LatticeMode& b) {
  if (a.lambda != b.lambda) return a.lambda < b.lambda;
  return a.l < b.l;
}

}  // namespace

EigenvalueTable::EigenvalueTable(std::int64_t max_value, std::vector<EigenvalueEntry> entries)
    : max_value_(max_value), entries_(std::move(entries)) {
  for (const auto& e : entries_) total_modes_ += e.multiplicity;
}

const EigenvalueEntry& EigenvalueTable::entry_at(std::int64_t index) const {
  require(index >= 1 && index <= total_modes_,
          "mode index " + std::to_string(index) + " outside table of " +
              std::to_string(total_modes_) + " modes");
  auto it = std::upper_bound(entries_.begin(), entries_.end(), index,
                             [](std::int64_t n, const EigenvalueEntry& e) { return n < e.first_index; });
  return *std::prev(it);
}

std::int64_t EigenvalueTable::value_at(std::int64_t index) const { return entry_at(index).value; }

const EigenvalueEntry* EigenvalueTable::find_value(std::int64_t value) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), value,
                             [](const EigenvalueEntry& e, std::int64_t v) { return e.value < v; });
  if (it == entries_.end() || it->value != value) return nullptr;
  return &*it;
}

std::int64_t EigenvalueTable::last_index_of_value(std::int64_t value) const {
  const auto* e = find_value(value);
  require(e != nullptr, std::to_string(value) + " is not an eigenvalue within the table");
  return e->last_index();
}

EigenvalueTable enumerate_eigenvalues(std::int64_t max_value) {
  require(max_value >= 1, "max_value must be at least 1");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(max_value) + 1, 0);
  const std::int64_t r = isqrt(max_value);
  for (std::int64_t a = -r; a <= r; ++a) {
    for (std::int64_t b = -r; b <= r; ++b) {
      const std::int64_t ab = a * a + b * b;
      if (ab > max_value) continue;
      const std::int64_t cmax = isqrt(max_value - ab);
      for (std::int64_t c = -cmax; c <= cmax; ++c) ++counts[ab + c * c];
    }
  }
  std::vector<EigenvalueEntry> entries;
  std::int64_t next_index = 1;
  for (std::int64_t v = 1; v <= max_value; ++v) {
    if (counts[v] == 0) continue;
    entries.push_back({v, counts[v], next_index});
    next_index += counts[v];
  }
  return EigenvalueTable(max_value, std::move(entries));
}

std::vector<LatticeMode> modes_in_range(std::int64_t lo, std::int64_t hi) {
  std::vector<LatticeMode> out;
  lo = std::max<std::int64_t>(lo, 1);
  if (hi < lo) return out;
  const std::int64_t r = isqrt(hi);
  for (std::int64_t a = -r; a <= r; ++a) {
    for (std::int64_t b = -r; b <= r; ++b) {
      const std::int64_t ab = a * a + b * b;
      if (ab > hi) continue;
      const std::int64_t cmin = ceil_sqrt(lo - ab);
      const std::int64_t cmax = isqrt(hi - ab);
      for (std::int64_t c = cmin; c <= cmax; ++c) {
        out.push_back({{int(a), int(b), int(c)}, ab + c * c});
        if (c != 0) out.push_back({{int(a), int(b), int(-c)}, ab + c * c});
      }
    }
  }
  std::sort(out.begin(), out.end(), lex_less);
  return out;
}

std::vector<LatticeMode> modes_with_value(std::int64_t value) { return modes_in_range(value, value); }

std::vector<std::int64_t> gap_positions(const EigenvalueTable& table, double rho) {
  require(rho > 0.0, "rho must be positive");
  require(!table.empty(), "eigenvalue table is empty");
  std::vector<std::int64_t> out;
  const auto& e = table.entries();
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    if (static_cast<double>(e[i + 1].value - e[i].value) >= rho) out.push_back(e[i].last_index());
  }
  return out;
}

std::vector<LatticeMode> shell_modes(std::int64_t n_value, double k) {
  const auto lo = static_cast<std::int64_t>(std::ceil(static_cast<double>(n_value) - k));
  const auto hi = static_cast<std::int64_t>(std::floor(static_cast<double>(n_value) + k));
  return modes_in_range(lo, hi);
}

ShellSeparation check_shell_separation(std::int64_t n_value, double k, double r) {
  require(k >= 0.0 && static_cast<double>(n_value) > k, "shell requires N_value > k >= 0");
  require(r > 0.0, "separation radius must be positive");

  std::vector<LatticeMode> shell = shell_modes(n_value, k);
  ShellSeparation result;
  result.shell_size = shell.size();
  if (shell.empty()) {
    result.empty_shell = true;
    return result;
  }

  // Sort by l1 so the inner loop can stop once |l1 - m1| > r; every pair that
  // could lie within distance r is still visited.
  std::sort(shell.begin(), shell.end(), [](const LatticeMode& a, const LatticeMode& b) { return a.l < b.l; });
  const double r2 = r * r;
  for (std::size_t i = 0; i < shell.size(); ++i) {
    for (std::size_t j = i + 1; j < shell.size(); ++j) {
      const double d0 = shell[j].l[0] - shell[i].l[0];
      if (d0 > r) break;
      const double d1 = shell[j].l[1] - shell[i].l[1];
      const double d2 = shell[j].l[2] - shell[i].l[2];
      if (d0 * d0 + d1 * d1 + d2 * d2 <= r2) {
        result.separated = false;
        result.witness_a = shell[i].l;
        result.witness_b = shell[j].l;
        return result;
      }
    }
  }
  return result;
}

std::vector<AdmissibleN> search_admissible_n(double k, double r, double rho, std::int64_t max_value) {
  require(rho > 0.0, "rho must be positive");
  require(k >= 0.0 && r > 0.0, "search requires k >= 0 and r > 0");
  // Consecutive sums of three squares differ by at most 3, so the successor of
  // every block up to max_value is inside this table.
  const EigenvalueTable table = enumerate_eigenvalues(max_value + 3);
  std::vector<AdmissibleN> out;
  const auto& e = table.entries();
  for (std::size_t i = 0; i + 1 < e.size() && e[i].value <= max_value; ++i) {
    if (static_cast<double>(e[i].value) <= k) continue;
    if (static_cast<double>(e[i + 1].value - e[i].value) < rho) continue;
    if (shell_separation_holds(e[i].value, k, r)) out.push_back({e[i].last_index(), e[i].value});
  }
  return out;
}

GapReport evaluate_gap_condition(std::int64_t n_index, double k, double lipschitz, double delta,
                                 const EigenvalueTable& table) {
  require(n_index >= 1 && n_index < table.total_modes(),
          "N_index must have a successor inside the table");
  GapReport rep;
  rep.n_index = n_index;
  rep.lambda_n = table.value_at(n_index);
  rep.lambda_n1 = table.value_at(n_index + 1);
  rep.theta = rep.lambda_n1 - rep.lambda_n;
  rep.k = k;
  rep.lipschitz = lipschitz;
  rep.delta = delta;

  const double lam = static_cast<double>(rep.lambda_n);
  const double L = lipschitz;
  const double quad = (2.0 * lam - k) * k - 4.0 * L * lam;
  rep.lambda_exceeds_k = lam > k;
  rep.k_exceeds_4l = k > 4.0 * L;
  rep.quadratic_prerequisite = quad > 0.0;
  rep.lambda_exceeds_2l = lam > 2.0 * L;

  constexpr double inf = std::numeric_limits<double>::infinity();
  rep.terms.delta = delta;
  rep.terms.lipschitz_shell = rep.lambda_exceeds_k ? 2.0 * L * k / (lam - k) : inf;
  rep.terms.lipschitz_quadratic = rep.k_exceeds_4l ? 2.0 * L * L / (k - 4.0 * L) : inf;
  rep.terms.lipschitz_low = rep.quadratic_prerequisite ? 2.0 * L * L * lam / quad : inf;

  const double half_theta = 0.5 * static_cast<double>(rep.theta);
  rep.mu = 2.0 * (half_theta - rep.terms.sum());
  rep.satisfied = rep.lambda_exceeds_k && rep.k_exceeds_4l && rep.quadratic_prerequisite &&
                  rep.lambda_exceeds_2l && half_theta > rep.terms.sum();
  return rep;
}

double asymptotic_gap_margin(double rho, double lipschitz, double delta, double k) {
  const double L = lipschitz;
  require(k > 4.0 * L, "asymptotic gap check needs k > 4L");
  return 0.5 * rho - (delta + 2.0 * L * L / (k - 4.0 * L) + L * L / (k - 2.0 * L));
}

}  // namespace imch

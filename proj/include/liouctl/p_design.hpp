#pragma once

// Eigenvalue design for the observable P and the brute-force check that the
// target has the smallest Lyapunov value among the diagonal states reachable
// by permuting the spectrum.

#include "liouctl/lyapunov_controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

namespace liouctl {

enum class PProvenance { constructed, user_supplied };

struct PDesign {
  std::vector<double> values;
  double min_gap = 0.0;
  PProvenance provenance = PProvenance::constructed;
};

/// Anti-monotone assignment: a smaller target population gets a larger P.
/// Equal populations get distinct values, the lower index taking the larger
/// one. Sorted values are base, base + min_gap, base + 2 min_gap, ...
inline PDesign design_P(const std::vector<double>& rhof_diag, double min_gap = 0.5,
                        double base = 0.01) {
  if (rhof_diag.empty()) throw ValidationError("design_P: empty target");
  if (!(min_gap > 0.0)) throw ValidationError("design_P: min_gap must be > 0");
  if (!(base > 0.0)) throw ValidationError("design_P: base must be > 0");
  double sum = 0.0;
  for (double p : rhof_diag) {
    if (!(p >= -1e-12) || !std::isfinite(p)) {
      throw ValidationError("design_P: target populations must be nonnegative");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-8) throw ValidationError("design_P: populations must sum to 1");

  const std::size_t n = rhof_diag.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Position 0 receives the smallest P: largest population first, and among
  // equal populations the higher index first.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rhof_diag[a] != rhof_diag[b]) return rhof_diag[a] > rhof_diag[b];
    return a > b;
  });
  PDesign d;
  d.values.assign(n, 0.0);
  d.min_gap = min_gap;
  for (std::size_t r = 0; r < n; ++r) d.values[order[r]] = base + min_gap * static_cast<double>(r);
  return d;
}

inline constexpr int kMaxEnumerationDim = 8;

enum class PermutationMode { gamma_zero, gamma_solved };

struct MinimalityCheck {
  bool pass = true;
  double worst_margin = std::numeric_limits<double>::infinity();  // min V(other) - V(target)
  std::vector<int> worst_permutation;  // indices into the target diagonal
  double target_value = 0.0;
  std::size_t candidates = 0;          // distinct non-target states compared
};

namespace detail {

inline bool nearly_equal(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

// Every distinct arrangement of `values`, each paired with the index
// permutation that produced it. The identity arrangement comes first.
inline std::vector<std::pair<std::vector<double>, std::vector<int>>> distinct_arrangements(
    const std::vector<double>& values, double dedup_tol) {
  const int n = static_cast<int>(values.size());
  if (n > kMaxEnumerationDim) {
    std::ostringstream os;
    os << "permutation enumeration limited to N <= " << kMaxEnumerationDim << " (got " << n << ")";
    throw ValidationError(os.str());
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::pair<std::vector<double>, std::vector<int>>> out;
  do {
    std::vector<double> arr(n);
    for (int i = 0; i < n; ++i) arr[i] = values[perm[i]];
    bool dup = false;
    for (const auto& seen : out) {
      if (nearly_equal(seen.first, arr, dedup_tol)) {
        dup = true;
        break;
      }
    }
    if (!dup) out.emplace_back(std::move(arr), perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

inline DensityMatrix diagonal_state(const std::vector<double>& d) {
  const RealVector v = Eigen::Map<const RealVector>(d.data(), static_cast<Eigen::Index>(d.size()));
  return DensityMatrix::trusted(v.cast<cplx>().asDiagonal());
}

}  // namespace detail

/// V(target) < V(other) for every distinct permutation of the target's
/// diagonal. gamma_zero evaluates P at gamma = 0; gamma_solved solves gamma
/// for each candidate (requires `theta`).
inline MinimalityCheck verify_min_over_permutations(const DesignedObservable& obs,
                                                    const DensityMatrix& rhof_tilde,
                                                    PermutationMode mode = PermutationMode::gamma_zero,
                                                    const ThetaSpec* theta = nullptr,
                                                    double dedup_tol = 1e-12) {
  const Eigen::Index n = rhof_tilde.dim();
  if (n != obs.system().dim()) throw DimensionError("verify_min_over_permutations: dimension mismatch");
  if (mode == PermutationMode::gamma_solved && theta == nullptr) {
    throw ValidationError("verify_min_over_permutations: gamma_solved mode needs a theta spec");
  }
  std::vector<double> diag(n);
  for (Eigen::Index i = 0; i < n; ++i) diag[i] = rhof_tilde.mat()(i, i).real();

  MinimalityCheck res;
  const HermitianMatrix p0 = obs.P(0.0);
  res.target_value = lyapunov_value(p0, rhof_tilde);
  const auto arrangements = detail::distinct_arrangements(diag, dedup_tol);
  for (std::size_t a = 1; a < arrangements.size(); ++a) {
    const DensityMatrix cand = detail::diagonal_state(arrangements[a].first);
    double v = 0.0;
    if (mode == PermutationMode::gamma_zero) {
      v = lyapunov_value(p0, cand);
    } else {
      const GammaSolve g = solve_gamma(cand, rhof_tilde, obs, *theta, 0.0);
      v = lyapunov_value(obs.P(g.value), cand);
    }
    const double margin = v - res.target_value;
    ++res.candidates;
    if (margin < res.worst_margin) {
      res.worst_margin = margin;
      res.worst_permutation = arrangements[a].second;
    }
  }
  res.pass = res.worst_margin > 0.0;
  return res;
}

struct ESet {
  std::vector<DensityMatrix> candidates;
};

/// Diagonal states whose diagonal is a distinct permutation of rho0's spectrum.
inline ESet enumerate_E(const DensityMatrix& rho0, double dedup_tol = 1e-8) {
  const RealVector s = spectrum(rho0.mat());
  const std::vector<double> vals(s.data(), s.data() + s.size());
  ESet e;
  for (const auto& arr : detail::distinct_arrangements(vals, dedup_tol)) {
    e.candidates.push_back(detail::diagonal_state(arr.first));
  }
  return e;
}

}  // namespace liouctl

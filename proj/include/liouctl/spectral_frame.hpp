#pragma once

// Eigen-frame of the perturbed Hamiltonian H(gamma) = H0 + gamma * sum_{mask} Hk,
// the designed observable P_gamma built on that frame, and runtime checks of
// the convergence conditions (strong regularity, full connectedness,
// commutation, distinct diagonal of P).

#include "liouctl/hermitian_core.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

namespace liouctl {

class BranchCrossingError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Internal Hamiltonian plus control Hamiltonians H_1..H_r.
struct HamiltonianSet {
  HermitianMatrix h0;
  std::vector<HermitianMatrix> controls;

  Eigen::Index dim() const { return h0.dim(); }
  std::size_t num_controls() const { return controls.size(); }

  void validate() const {
    if (controls.empty()) throw ValidationError("HamiltonianSet: no control Hamiltonians");
    for (const auto& hk : controls) {
      if (hk.dim() != h0.dim()) {
        throw DimensionError("HamiltonianSet: control Hamiltonian dimension differs from H0");
      }
    }
  }
};

/// 0/1 selection of the controls that carry the shared perturbation.
using ControlMask = std::vector<int>;

inline void validate_mask(const ControlMask& mask, std::size_t r) {
  if (mask.size() != r) {
    std::ostringstream os;
    os << "mask length " << mask.size() << " != number of controls " << r;
    throw ValidationError(os.str());
  }
  for (int c : mask) {
    if (c != 0 && c != 1) throw ValidationError("mask entries must be 0 or 1");
  }
}

/// Sum of the masked control Hamiltonians, i.e. dH/dgamma.
inline ComplexMatrix masked_control_sum(const HamiltonianSet& sys, const ControlMask& mask) {
  validate_mask(mask, sys.num_controls());
  ComplexMatrix s = ComplexMatrix::Zero(sys.dim(), sys.dim());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) s += sys.controls[k].mat();
  }
  return s;
}

inline ComplexMatrix perturbed_hamiltonian(const HamiltonianSet& sys, const ControlMask& mask,
                                           double gamma) {
  return sys.h0.mat() + gamma * masked_control_sum(sys, mask);
}

struct BohrFrequency {
  Eigen::Index l;
  Eigen::Index m;
  double omega;  // lambda_l - lambda_m
};

struct SpectralFrame {
  double gamma = 0.0;
  RealVector eigenvalues;
  UnitaryMatrix u1;  // columns are the eigenvectors |phi_n>
  std::vector<BohrFrequency> bohr;

  Eigen::Index dim() const { return eigenvalues.size(); }

  double min_eigen_gap() const {
    double g = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dim(); ++i)
      for (Eigen::Index j = i + 1; j < dim(); ++j)
        g = std::min(g, std::abs(eigenvalues(i) - eigenvalues(j)));
    return g;
  }
};

namespace detail {

inline std::vector<BohrFrequency> bohr_frequencies(const RealVector& lambda) {
  std::vector<BohrFrequency> out;
  for (Eigen::Index l = 0; l < lambda.size(); ++l)
    for (Eigen::Index m = 0; m < lambda.size(); ++m)
      if (l != m) out.push_back({l, m, lambda(l) - lambda(m)});
  return out;
}

}  // namespace detail

inline constexpr double kBranchOverlapMin = 0.7;

/// Eigendecomposition of H(gamma). With `prev`, columns are reordered so that
/// column j continues prev's branch j (largest |<phi_j^prev|phi>|).
inline SpectralFrame build_frame(const HamiltonianSet& sys, const ControlMask& mask, double gamma,
                                 const SpectralFrame* prev = nullptr) {
  if (!std::isfinite(gamma)) throw ValidationError("build_frame: gamma is not finite");
  auto eig = eig_hermitian(HermitianMatrix(perturbed_hamiltonian(sys, mask, gamma)));
  SpectralFrame f;
  f.gamma = gamma;
  if (prev == nullptr) {
    f.eigenvalues = std::move(eig.eigenvalues);
    f.u1 = std::move(eig.eigenvectors);
  } else {
    const Eigen::Index n = eig.eigenvalues.size();
    if (prev->dim() != n) throw DimensionError("build_frame: prev frame dimension mismatch");
    const Eigen::MatrixXd overlap = (prev->u1.mat().adjoint() * eig.eigenvectors.mat()).cwiseAbs();
    std::vector<Eigen::Index> assign(n, -1);
    std::vector<bool> used(n, false);
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = -1;
      double best_val = -1.0;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (!used[c] && overlap(j, c) > best_val) {
          best_val = overlap(j, c);
          best = c;
        }
      }
      if (best_val < kBranchOverlapMin) {
        std::ostringstream os;
        os << "branch crossing at gamma = " << gamma << ": branch " << j
           << " best overlap " << best_val << " < " << kBranchOverlapMin;
        throw BranchCrossingError(os.str());
      }
      assign[j] = best;
      used[best] = true;
    }
    RealVector lam(n);
    ComplexMatrix u(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      lam(j) = eig.eigenvalues(assign[j]);
      u.col(j) = eig.eigenvectors.mat().col(assign[j]);
    }
    f.eigenvalues = std::move(lam);
    f.u1 = UnitaryMatrix(std::move(u), 1e-10);
  }
  f.bohr = detail::bohr_frequencies(f.eigenvalues);
  return f;
}

struct RegularityReport {
  bool strongly_regular = false;
  double min_gap = std::numeric_limits<double>::infinity();
  // Closest pair of Bohr frequencies; empty for N < 2.
  std::optional<std::pair<BohrFrequency, BohrFrequency>> witness;
};

/// All ordered-pair Bohr frequencies pairwise distinct by more than tol.
inline RegularityReport check_strong_regularity(const SpectralFrame& frame, double tol = 1e-8) {
  RegularityReport rep;
  const auto& b = frame.bohr;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = i + 1; j < b.size(); ++j) {
      const double gap = std::abs(b[i].omega - b[j].omega);
      if (gap < rep.min_gap) {
        rep.min_gap = gap;
        rep.witness = std::make_pair(b[i], b[j]);
      }
    }
  }
  rep.strongly_regular = rep.min_gap > tol;
  return rep;
}

struct ConnectednessReport {
  bool fully_connected = false;
  // coupling(j, l) = max_k |(U1^dagger Hk U1)_{jl}|; diagonal left at 0.
  Eigen::MatrixXd coupling;
  Eigen::MatrixXi connected;  // 1 where coupling > tol, off-diagonal only
  // Weakest off-diagonal link.
  Eigen::Index weakest_j = -1;
  Eigen::Index weakest_l = -1;
  double weakest = std::numeric_limits<double>::infinity();
};

inline std::vector<ComplexMatrix> controls_in_frame(const SpectralFrame& frame,
                                                    const std::vector<HermitianMatrix>& hks) {
  std::vector<ComplexMatrix> out;
  out.reserve(hks.size());
  const ComplexMatrix& u = frame.u1.mat();
  for (const auto& hk : hks) out.push_back(u.adjoint() * hk.mat() * u);
  return out;
}

inline ConnectednessReport check_full_connectedness(const SpectralFrame& frame,
                                                    const std::vector<HermitianMatrix>& hks,
                                                    double tol = 1e-10) {
  const Eigen::Index n = frame.dim();
  ConnectednessReport rep;
  rep.coupling = Eigen::MatrixXd::Zero(n, n);
  rep.connected = Eigen::MatrixXi::Zero(n, n);
  for (const auto& hk_hat : controls_in_frame(frame, hks)) {
    rep.coupling = rep.coupling.cwiseMax(hk_hat.cwiseAbs());
  }
  rep.coupling.diagonal().setZero();
  rep.fully_connected = true;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index l = 0; l < n; ++l) {
      if (j == l) continue;
      rep.connected(j, l) = rep.coupling(j, l) > tol ? 1 : 0;
      if (!rep.connected(j, l)) rep.fully_connected = false;
      if (rep.coupling(j, l) < rep.weakest) {
        rep.weakest = rep.coupling(j, l);
        rep.weakest_j = j;
        rep.weakest_l = l;
      }
    }
  }
  return rep;
}

inline void validate_p_values(const std::vector<double>& p, Eigen::Index n) {
  if (static_cast<Eigen::Index>(p.size()) != n) {
    std::ostringstream os;
    os << "P values: expected " << n << " entries, got " << p.size();
    throw ValidationError(os.str());
  }
  for (double v : p) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("P values must be finite and strictly positive");
    }
  }
}

/// P_gamma = sum_j P_j |phi_j><phi_j|, with P_j bound to the frame's column j.
inline HermitianMatrix build_P(const SpectralFrame& frame, const std::vector<double>& p_values) {
  validate_p_values(p_values, frame.dim());
  const ComplexMatrix& u = frame.u1.mat();
  const RealVector pv = Eigen::Map<const RealVector>(p_values.data(), frame.dim());
  ComplexMatrix p = u * pv.cast<cplx>().asDiagonal() * u.adjoint();
  p = 0.5 * (p + p.adjoint());
  return HermitianMatrix(std::move(p));
}

/// First-order eigenvector perturbation form of dP/dgamma:
///   sum_{j != l} (P_j - P_l) <phi_l|H'|phi_j> / (lambda_j - lambda_l) |phi_l><phi_j|.
inline HermitianMatrix dP_dgamma_perturbative(const SpectralFrame& frame,
                                              const ComplexMatrix& h_prime,
                                              const std::vector<double>& p_values,
                                              double degeneracy_guard = 1e-8) {
  validate_p_values(p_values, frame.dim());
  const Eigen::Index n = frame.dim();
  if (frame.min_eigen_gap() < degeneracy_guard) {
    std::ostringstream os;
    os << "dP/dgamma: eigenvalue gap " << frame.min_eigen_gap() << " below "
       << degeneracy_guard << " at gamma = " << frame.gamma;
    throw SingularityError(os.str());
  }
  const ComplexMatrix& u = frame.u1.mat();
  const ComplexMatrix hp = u.adjoint() * h_prime * u;
  ComplexMatrix d = ComplexMatrix::Zero(n, n);
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (l == j) continue;
      const double lam_gap = frame.eigenvalues(j) - frame.eigenvalues(l);
      d(l, j) = (p_values[j] - p_values[l]) * hp(l, j) / lam_gap;
    }
  }
  ComplexMatrix out = u * d * u.adjoint();
  out = 0.5 * (out + out.adjoint());
  return HermitianMatrix(std::move(out));
}

/// Pairwise separation of P's working-basis diagonal entries.
struct DiagonalDistinctness {
  bool distinct = false;
  double min_gap = std::numeric_limits<double>::infinity();
  // ||P - diag(P)||_F: how far P is from diagonal in the working basis.
  double offdiag_mass = 0.0;
};

inline DiagonalDistinctness check_P_diag_distinct(const HermitianMatrix& p, double tol = 1e-8) {
  DiagonalDistinctness rep;
  const Eigen::Index n = p.dim();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      rep.min_gap = std::min(rep.min_gap, std::abs(p.mat()(i, i).real() - p.mat()(j, j).real()));
  if (n < 2) rep.min_gap = std::numeric_limits<double>::infinity();
  rep.distinct = rep.min_gap > tol;
  ComplexMatrix off = p.mat();
  off.diagonal().setZero();
  rep.offdiag_mass = off.norm();
  return rep;
}

inline DensityMatrix to_eigenbasis(const DensityMatrix& rho, const SpectralFrame& frame) {
  if (rho.dim() != frame.dim()) throw DimensionError("to_eigenbasis: dimension mismatch");
  const ComplexMatrix& u = frame.u1.mat();
  return DensityMatrix::trusted(u.adjoint() * rho.mat() * u);
}

inline DensityMatrix from_eigenbasis(const DensityMatrix& rho_hat, const SpectralFrame& frame) {
  if (rho_hat.dim() != frame.dim()) throw DimensionError("from_eigenbasis: dimension mismatch");
  const ComplexMatrix& u = frame.u1.mat();
  return DensityMatrix::trusted(u * rho_hat.mat() * u.adjoint());
}

/// The designed observable as a function of gamma. P_j is bound to the j-th
/// ascending eigenvector at gamma = 0; for gamma != 0 the binding follows
/// overlap-matched continuation from 0 (in steps of at most `max_step` when
/// a single jump is ambiguous).
class DesignedObservable {
 public:
  DesignedObservable(HamiltonianSet sys, ControlMask mask, std::vector<double> p_values,
                     double max_step = 0.02)
      : sys_(std::move(sys)),
        mask_(std::move(mask)),
        p_values_(std::move(p_values)),
        max_step_(max_step) {
    sys_.validate();
    validate_mask(mask_, sys_.num_controls());
    validate_p_values(p_values_, sys_.dim());
    h_prime_ = masked_control_sum(sys_, mask_);
    anchor_ = build_frame(sys_, mask_, 0.0);
  }

  const HamiltonianSet& system() const { return sys_; }
  const ControlMask& mask() const { return mask_; }
  const std::vector<double>& p_values() const { return p_values_; }
  const ComplexMatrix& h_prime() const { return h_prime_; }
  const SpectralFrame& anchor() const { return anchor_; }

  SpectralFrame frame(double gamma) const {
    if (!std::isfinite(gamma)) throw ValidationError("gamma is not finite");
    if (gamma == 0.0) return anchor_;
    // A direct match against the anchor is unambiguous whenever every branch
    // keeps overlap > 0.7; otherwise walk there in small steps.
    try {
      return build_frame(sys_, mask_, gamma, &anchor_);
    } catch (const BranchCrossingError&) {
    }
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(gamma) / max_step_)));
    SpectralFrame f = anchor_;
    for (int s = 1; s <= steps; ++s) {
      const double g = gamma * static_cast<double>(s) / steps;
      f = build_frame(sys_, mask_, g, &f);
    }
    return f;
  }

  HermitianMatrix P(double gamma) const { return build_P(frame(gamma), p_values_); }

  /// Central difference (P(g+h) - P(g-h)) / 2h.
  HermitianMatrix dP_finite_difference(double gamma, double h = 1e-6) const {
    const SpectralFrame f = frame(gamma);
    if (f.min_eigen_gap() < 1e-8) {
      std::ostringstream os;
      os << "dP/dgamma: degenerate spectrum at gamma = " << gamma;
      throw SingularityError(os.str());
    }
    const SpectralFrame fp = build_frame(sys_, mask_, gamma + h, &f);
    const SpectralFrame fm = build_frame(sys_, mask_, gamma - h, &f);
    ComplexMatrix d = (build_P(fp, p_values_).mat() - build_P(fm, p_values_).mat()) / (2.0 * h);
    d = 0.5 * (d + d.adjoint());
    return HermitianMatrix(std::move(d));
  }

  HermitianMatrix dP_analytic(double gamma) const {
    return dP_dgamma_perturbative(frame(gamma), h_prime_, p_values_);
  }

 private:
  HamiltonianSet sys_;
  ControlMask mask_;
  std::vector<double> p_values_;
  double max_step_;
  ComplexMatrix h_prime_;
  SpectralFrame anchor_;
};

/// Central finite-difference dP/dgamma with branch-matched frames (h = 1e-6).
inline HermitianMatrix dP_dgamma(const HamiltonianSet& sys, const ControlMask& mask, double gamma,
                                 const std::vector<double>& p_values) {
  return DesignedObservable(sys, mask, p_values).dP_finite_difference(gamma);
}

}  // namespace liouctl

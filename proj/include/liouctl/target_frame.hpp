#pragma once

// Moves a non-diagonal target into a frame where it is diagonal, and measures
// how close a state is to the target.

#include "liouctl/simulation_problem.hpp"

#include <sstream>
#include <string>

namespace liouctl {

struct TargetFrame {
  UnitaryMatrix u2;          // columns: eigenvectors of rho_f, ascending eigenvalues
  DensityMatrix rhof_tilde;  // diag(eigenvalues)
  RealVector eigenvalues;
};

/// U2 from the Hermitian eigendecomposition of rho_f (ascending, phase-fixed,
/// degenerate eigenspaces rebased on projected e_1, e_2, ...).
inline TargetFrame diagonalize_target(const DensityMatrix& rho_f) {
  auto eig = eig_hermitian(HermitianMatrix(rho_f.mat()));
  TargetFrame f;
  f.eigenvalues = eig.eigenvalues;
  f.rhof_tilde = DensityMatrix::trusted(eig.eigenvalues.cast<cplx>().asDiagonal());
  f.u2 = std::move(eig.eigenvectors);
  return f;
}

/// How the Hamiltonians follow the state into the target frame.
enum class TargetTransform {
  // H~ = U2^dagger H U2 for H0 and every Hk; the tilde-frame problem is the
  // same physics written in another basis.
  conjugate,
  // Only rho0 and rhof are rotated; H0, Hk are used as given. This is a
  // different control problem; it is the variant whose closed loop
  // reproduces the published three-level numbers.
  states_only,
};

inline const char* to_string(TargetTransform t) {
  return t == TargetTransform::conjugate ? "conjugate" : "states_only";
}

inline TargetTransform parse_target_transform(const std::string& s) {
  if (s == "conjugate") return TargetTransform::conjugate;
  if (s == "states_only") return TargetTransform::states_only;
  throw ValidationError("unknown target transform '" + s + "' (expected conjugate|states_only)");
}

inline ComplexMatrix to_frame(const ComplexMatrix& m, const UnitaryMatrix& u) {
  return u.mat().adjoint() * m * u.mat();
}

inline ComplexMatrix from_frame(const ComplexMatrix& m, const UnitaryMatrix& u) {
  return u.mat() * m * u.mat().adjoint();
}

inline SimulationProblem transform_problem(const SimulationProblem& problem,
                                           const TargetFrame& frame,
                                           TargetTransform mode = TargetTransform::conjugate) {
  if (frame.u2.dim() != problem.sys.dim()) {
    throw DimensionError("transform_problem: frame dimension mismatch");
  }
  SimulationProblem out = problem;
  if (mode == TargetTransform::conjugate) {
    auto herm = [&](const HermitianMatrix& h) {
      ComplexMatrix m = to_frame(h.mat(), frame.u2);
      return HermitianMatrix(0.5 * (m + m.adjoint()));
    };
    out.sys.h0 = herm(problem.sys.h0);
    for (std::size_t k = 0; k < problem.sys.controls.size(); ++k) {
      out.sys.controls[k] = herm(problem.sys.controls[k]);
    }
  }
  out.rho0 = DensityMatrix::trusted(to_frame(problem.rho0.mat(), frame.u2));
  out.rhof = frame.rhof_tilde;
  return out;
}

inline DensityMatrix map_back(const DensityMatrix& rho_tilde, const TargetFrame& frame) {
  return DensityMatrix::trusted(from_frame(rho_tilde.mat(), frame.u2));
}

/// tr(rho rho_f) / tr(rho_f^2); equals tr(rho rho_f) for a pure target.
inline double transition_probability(const DensityMatrix& rho, const DensityMatrix& rho_f) {
  require_same_square(rho.mat(), rho_f.mat(), "transition_probability");
  const double purity = (rho_f.mat() * rho_f.mat()).trace().real();
  if (!(purity > 0.0)) throw ValidationError("transition_probability: tr(rho_f^2) = 0");
  return (rho.mat() * rho_f.mat()).trace().real() / purity;
}

}  // namespace liouctl

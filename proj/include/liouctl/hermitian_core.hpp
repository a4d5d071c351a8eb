#pragma once

// Dense complex matrix primitives shared by every other module: validated
// Hermitian / unitary / density wrappers, commutators, a Hermitian
// eigensolver with a deterministic basis convention, and exp(-iH dt).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace liouctl {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kHermiticityTol = 1e-10;
inline constexpr double kUnitarityTol = 1e-12;
inline constexpr double kPositivityTol = 1e-10;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class EigenSolverError : public Error {
 public:
  using Error::Error;
};

inline void require_same_square(const ComplexMatrix& a, const ComplexMatrix& b,
                                const char* what) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a.rows() << "x" << a.cols()
       << " vs " << b.rows() << "x" << b.cols() << ")";
    throw DimensionError(os.str());
  }
}

inline double hermiticity_defect(const ComplexMatrix& m) {
  return (m - m.adjoint()).norm();
}

inline double unitarity_defect(const ComplexMatrix& m) {
  return (m * m.adjoint() - ComplexMatrix::Identity(m.rows(), m.cols())).norm();
}

/// Hermitian matrix, checked at construction against a Frobenius tolerance.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(ComplexMatrix m, double tol = kHermiticityTol)
      : mat_(std::move(m)) {
    if (mat_.rows() != mat_.cols()) {
      throw DimensionError("HermitianMatrix: matrix is not square");
    }
    if (!mat_.allFinite()) {
      throw ValidationError("HermitianMatrix: non-finite entry");
    }
    const double defect = hermiticity_defect(mat_);
    if (defect > tol) {
      std::ostringstream os;
      os << "HermitianMatrix: ||H - H^dagger||_F = " << defect << " exceeds " << tol;
      throw ValidationError(os.str());
    }
  }

  const ComplexMatrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }

 private:
  ComplexMatrix mat_;
};

class UnitaryMatrix {
 public:
  UnitaryMatrix() = default;
  explicit UnitaryMatrix(ComplexMatrix m, double tol = kUnitarityTol) : mat_(std::move(m)) {
    if (mat_.rows() != mat_.cols()) {
      throw DimensionError("UnitaryMatrix: matrix is not square");
    }
    const double defect = unitarity_defect(mat_);
    if (!(defect <= tol)) {
      std::ostringstream os;
      os << "UnitaryMatrix: ||U U^dagger - I||_F = " << defect << " exceeds " << tol;
      throw ValidationError(os.str());
    }
  }

  static UnitaryMatrix identity(Eigen::Index n) {
    return UnitaryMatrix(ComplexMatrix::Identity(n, n));
  }

  const ComplexMatrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }

 private:
  ComplexMatrix mat_;
};

/// A quantum state: Hermitian, unit trace, positive semidefinite.
/// Construct through validate_density().
class DensityMatrix {
 public:
  DensityMatrix() = default;

  const ComplexMatrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }

  // Skips validation. Used for states produced by unitary conjugation of an
  // already-valid state, where the invariants hold to round-off.
  static DensityMatrix trusted(ComplexMatrix m) {
    DensityMatrix d;
    d.mat_ = std::move(m);
    return d;
  }

 private:
  ComplexMatrix mat_;
};

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_square(a, b, "commutator");
  return a * b - b * a;
}

struct EigenDecomposition {
  RealVector eigenvalues;  // ascending
  UnitaryMatrix eigenvectors;  // columns
};

namespace detail {

// Make the largest-magnitude component of each column real and positive.
// Ties within 1e-12 go to the lowest row index.
inline void fix_column_phases(ComplexMatrix& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double a = std::abs(v(i, j));
      if (a > best_abs + 1e-12) {
        best_abs = a;
        best = i;
      }
    }
    if (best_abs > 0.0) {
      const cplx phase = std::conj(v(best, j)) / best_abs;
      v.col(j) *= phase;
      v(best, j) = cplx(std::abs(v(best, j)), 0.0);
    }
  }
}

// Replace the basis of a degenerate eigenspace (columns [first, last)) with
// the Gram-Schmidt orthonormalization of the projected standard basis
// vectors e_1, e_2, ... taken in order.
inline void canonicalize_cluster(ComplexMatrix& v, Eigen::Index first, Eigen::Index last) {
  const Eigen::Index n = v.rows();
  const Eigen::Index k = last - first;
  const ComplexMatrix block = v.middleCols(first, k);
  ComplexMatrix basis(n, k);
  Eigen::Index found = 0;
  for (Eigen::Index e = 0; e < n && found < k; ++e) {
    // Projection of e_e onto the eigenspace: block * block^dagger * e_e.
    ComplexVector w = block * block.row(e).adjoint();
    for (Eigen::Index q = 0; q < found; ++q) {
      w -= basis.col(q) * basis.col(q).dot(w);
    }
    const double nrm = w.norm();
    if (nrm > 1e-8) {
      basis.col(found++) = w / nrm;
    }
  }
  if (found == k) {
    v.middleCols(first, k) = basis;
  }
}

}  // namespace detail

/// Hermitian eigendecomposition with ascending eigenvalues. Degenerate
/// clusters (gaps below 1e-12 * max(1, ||H||_F)) are rebased onto projected
/// standard basis vectors, then each column is phase-fixed.
inline EigenDecomposition eig_hermitian(const HermitianMatrix& h) {
  const Eigen::Index n = h.dim();
  // Symmetrize so round-off in the input does not leak into the solver.
  const ComplexMatrix sym = 0.5 * (h.mat() + h.mat().adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw EigenSolverError("eig_hermitian: eigensolver did not converge");
  }
  RealVector evals = solver.eigenvalues();
  ComplexMatrix evecs = solver.eigenvectors();

  const double cluster_tol = 1e-12 * std::max(1.0, sym.norm());
  Eigen::Index start = 0;
  for (Eigen::Index j = 1; j <= n; ++j) {
    if (j == n || evals(j) - evals(j - 1) > cluster_tol) {
      if (j - start > 1) {
        detail::canonicalize_cluster(evecs, start, j);
      }
      start = j;
    }
  }
  detail::fix_column_phases(evecs);
  // Solver output is unitary to ~1e-15 per entry; allow a little headroom
  // for N up to a few hundred.
  return {std::move(evals), UnitaryMatrix(std::move(evecs), 1e-10)};
}

/// exp(-i H dt) from the spectral decomposition of H.
inline UnitaryMatrix expm_unitary(const HermitianMatrix& h, double dt) {
  const auto eig = eig_hermitian(h);
  const ComplexMatrix& v = eig.eigenvectors.mat();
  ComplexVector phases(eig.eigenvalues.size());
  for (Eigen::Index j = 0; j < phases.size(); ++j) {
    phases(j) = std::exp(cplx(0.0, -eig.eigenvalues(j) * dt));
  }
  return UnitaryMatrix(v * phases.asDiagonal() * v.adjoint(), 1e-10);
}

/// Checks the three density-matrix invariants; the error message names every
/// invariant that failed.
inline DensityMatrix validate_density(const ComplexMatrix& rho, double tol = kPositivityTol) {
  if (rho.rows() != rho.cols() || rho.rows() == 0) {
    throw DimensionError("density matrix must be square and non-empty");
  }
  if (!rho.allFinite()) {
    throw ValidationError("density matrix has non-finite entries");
  }
  std::vector<std::string> failures;
  const double herm = hermiticity_defect(rho);
  const double herm_tol = std::max(tol, kHermiticityTol);
  if (herm > herm_tol) {
    std::ostringstream os;
    os << "not Hermitian (||rho - rho^dagger||_F = " << herm << ")";
    failures.push_back(os.str());
  }
  const cplx tr = rho.trace();
  if (std::abs(tr - cplx(1.0, 0.0)) > std::max(tol, 1e-12)) {
    std::ostringstream os;
    os << "trace = " << tr.real();
    if (tr.imag() != 0.0) os << (tr.imag() > 0 ? "+" : "") << tr.imag() << "i";
    os << " != 1";
    failures.push_back(os.str());
  }
  if (herm <= herm_tol) {
    const ComplexMatrix sym = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym, Eigen::EigenvaluesOnly);
    const double lmin = solver.eigenvalues().minCoeff();
    if (lmin < -tol) {
      std::ostringstream os;
      os << "negative eigenvalue " << lmin;
      failures.push_back(os.str());
    }
  }
  if (!failures.empty()) {
    std::string msg = "invalid density matrix: ";
    for (std::size_t i = 0; i < failures.size(); ++i) {
      if (i) msg += "; ";
      msg += failures[i];
    }
    throw ValidationError(msg);
  }
  return DensityMatrix::trusted(rho);
}

/// Spectrum of a Hermitian matrix, ascending.
inline RealVector spectrum(const ComplexMatrix& m) {
  const ComplexMatrix sym = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

inline double spectral_norm(const ComplexMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace liouctl

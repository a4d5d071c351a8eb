#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace liouctl;

namespace {

HamiltonianSet tilde_system() {
  return fixture::working_problem(TargetTransform::conjugate).sys;
}

UnitaryMatrix u2() { return diagonalize_target(fixture::rhof()).u2; }

}  // namespace

TEST(BuildFrame, ThreeLevelAtZero) {
  const SpectralFrame f = build_frame(fixture::three_level(), {1}, 0.0);
  EXPECT_NEAR(f.eigenvalues(0), 0.3, 1e-15);
  EXPECT_NEAR(f.eigenvalues(1), 0.6, 1e-15);
  EXPECT_NEAR(f.eigenvalues(2), 0.9, 1e-15);
  EXPECT_LT((f.u1.mat() - ComplexMatrix::Identity(3, 3)).norm(), 1e-15);
  EXPECT_EQ(f.bohr.size(), 6u);
}

TEST(BuildFrame, ZeroGammaEqualsPlainEigendecomposition) {
  std::mt19937_64 rng(11);
  HamiltonianSet sys;
  sys.h0 = HermitianMatrix(oracle::random_hermitian(rng, 4));
  sys.controls.emplace_back(oracle::random_hermitian(rng, 4));
  const SpectralFrame f = build_frame(sys, {1}, 0.0);
  const auto eig = eig_hermitian(sys.h0);
  EXPECT_EQ((f.eigenvalues - eig.eigenvalues).norm(), 0.0);
  EXPECT_EQ((f.u1.mat() - eig.eigenvectors.mat()).norm(), 0.0);
}

TEST(BuildFrame, PerturbedMatchesCubicOracle) {
  const auto sys = fixture::three_level();
  const SpectralFrame f = build_frame(sys, {1}, 0.1);
  const auto roots = oracle::cubic_eigenvalues(perturbed_hamiltonian(sys, {1}, 0.1).real());
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(f.eigenvalues(j), roots[j], 1e-12);
  const ComplexMatrix h = perturbed_hamiltonian(sys, {1}, 0.1);
  const ComplexMatrix& u = f.u1.mat();
  EXPECT_LT((h * u - u * f.eigenvalues.cast<cplx>().asDiagonal()).norm(), 1e-10);
  for (const auto& b : f.bohr) {
    EXPECT_DOUBLE_EQ(b.omega, f.eigenvalues(b.l) - f.eigenvalues(b.m));
  }
}

TEST(BuildFrame, MaskZeroIgnoresControl) {
  auto sys = fixture::three_level();
  ComplexMatrix h2 = ComplexMatrix::Zero(3, 3);
  h2(1, 2) = h2(2, 1) = 1.0;
  sys.controls.emplace_back(h2);
  const SpectralFrame a = build_frame(sys, {1, 0}, 0.1);
  const SpectralFrame b = build_frame(fixture::three_level(), {1}, 0.1);
  EXPECT_LT((a.eigenvalues - b.eigenvalues).norm(), 1e-15);
  EXPECT_THROW(build_frame(sys, {1}, 0.1), ValidationError);
  EXPECT_THROW(build_frame(sys, {1, 2}, 0.1), ValidationError);
}

TEST(BuildFrame, BranchContinuityOnFineSteps) {
  const auto sys = fixture::three_level();
  SpectralFrame prev = build_frame(sys, {1}, 0.0);
  for (int i = 1; i <= 500; ++i) {
    const SpectralFrame next = build_frame(sys, {1}, i * 1e-3, &prev);
    const ComplexMatrix overlap = prev.u1.mat().adjoint() * next.u1.mat();
    EXPECT_GT(overlap.diagonal().cwiseAbs().minCoeff(), 0.99) << "gamma=" << i * 1e-3;
    prev = next;
  }
}

TEST(BuildFrame, LevelExchangeIsFollowed) {
  // Two diabatic levels swap order between gamma = 0.5 and 2; matching keeps
  // each P_j on its own branch.
  HamiltonianSet sys;
  ComplexMatrix h0 = ComplexMatrix::Zero(2, 2);
  h0(0, 0) = -1.0;
  h0(1, 1) = 1.0;
  ComplexMatrix h1 = ComplexMatrix::Zero(2, 2);
  h1(0, 0) = 1.0;
  h1(1, 1) = -1.0;
  h1(0, 1) = h1(1, 0) = 1e-3;
  sys.h0 = HermitianMatrix(h0);
  sys.controls.emplace_back(h1);
  const SpectralFrame before = build_frame(sys, {1}, 0.5);
  const SpectralFrame after = build_frame(sys, {1}, 2.0, &before);
  EXPECT_GT(after.eigenvalues(0), after.eigenvalues(1));
  EXPECT_GT(std::abs(after.u1.mat()(0, 0)), 0.99);
}

TEST(BuildFrame, AmbiguousMatchRaises) {
  // Every eigenvector of the new frame has overlap 1/sqrt(3) with every
  // reference column.
  ComplexMatrix f(3, 3);
  const cplx w = std::exp(cplx(0.0, 2.0 * M_PI / 3.0));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) f(i, j) = std::pow(w, i * j) / std::sqrt(3.0);
  RealVector lam(3);
  lam << 1.0, 2.0, 3.0;
  HamiltonianSet a;
  a.h0 = HermitianMatrix(lam.cast<cplx>().asDiagonal());
  a.controls.emplace_back(ComplexMatrix::Zero(3, 3));
  HamiltonianSet b;
  const ComplexMatrix hb = f * lam.cast<cplx>().asDiagonal() * f.adjoint();
  b.h0 = HermitianMatrix(0.5 * (hb + hb.adjoint()));
  b.controls.emplace_back(ComplexMatrix::Zero(3, 3));
  const SpectralFrame ref = build_frame(a, {1}, 0.0);
  EXPECT_THROW(build_frame(b, {1}, 0.0, &ref), BranchCrossingError);
}

TEST(StrongRegularity, ThreeLevelDegenerateAtZero) {
  const auto rep = check_strong_regularity(build_frame(fixture::three_level(), {1}, 0.0));
  EXPECT_FALSE(rep.strongly_regular);
  ASSERT_TRUE(rep.witness.has_value());
  EXPECT_NEAR(std::abs(rep.witness->first.omega), 0.3, 1e-15);
  EXPECT_NEAR(rep.witness->first.omega, rep.witness->second.omega, 1e-15);
}

TEST(StrongRegularity, TwoLevelAlwaysRegular) {
  HamiltonianSet sys;
  ComplexMatrix h0 = ComplexMatrix::Zero(2, 2);
  h0(1, 1) = 1.0;
  sys.h0 = HermitianMatrix(h0);
  sys.controls.emplace_back(ComplexMatrix::Ones(2, 2));
  const auto rep = check_strong_regularity(build_frame(sys, {1}, 0.0));
  EXPECT_TRUE(rep.strongly_regular);
  EXPECT_NEAR(rep.min_gap, 2.0, 1e-15);
}

TEST(StrongRegularity, PerturbedMarginFromOracle) {
  const auto sys = fixture::three_level();
  const auto rep = check_strong_regularity(build_frame(sys, {1}, 0.1));
  const auto lam = oracle::cubic_eigenvalues(perturbed_hamiltonian(sys, {1}, 0.1).real());
  std::vector<double> w;
  for (int l = 0; l < 3; ++l)
    for (int m = 0; m < 3; ++m)
      if (l != m) w.push_back(lam[l] - lam[m]);
  double gap = 1e300;
  for (std::size_t a = 0; a < w.size(); ++a)
    for (std::size_t b = a + 1; b < w.size(); ++b) gap = std::min(gap, std::abs(w[a] - w[b]));
  EXPECT_TRUE(rep.strongly_regular);
  EXPECT_NEAR(rep.min_gap, gap, 1e-12);
  EXPECT_GT(gap, 0.05);
}

TEST(FullConnectedness, ThreeLevelFailsAtTwoThree) {
  const auto sys = fixture::three_level();
  const auto rep = check_full_connectedness(build_frame(sys, {1}, 0.0), sys.controls);
  EXPECT_FALSE(rep.fully_connected);
  EXPECT_EQ(rep.connected(1, 2), 0);
  EXPECT_EQ(rep.connected(2, 1), 0);
  EXPECT_EQ(rep.connected(0, 1), 1);
  EXPECT_EQ(rep.connected(0, 2), 1);
  EXPECT_EQ(rep.weakest, 0.0);
}

TEST(FullConnectedness, AllOnesConnectedNearIdentityFrame) {
  HamiltonianSet sys;
  ComplexMatrix h0 = ComplexMatrix::Zero(3, 3);
  h0(0, 0) = 0.1;
  h0(1, 1) = 0.5;
  h0(2, 2) = 1.3;
  sys.h0 = HermitianMatrix(h0);
  sys.controls.emplace_back(ComplexMatrix::Ones(3, 3));
  const auto rep = check_full_connectedness(build_frame(sys, {1}, 0.0), sys.controls, 1e-10);
  EXPECT_TRUE(rep.fully_connected);
}

TEST(FullConnectedness, PerturbedMatchesExplicitCongruence) {
  const auto sys = fixture::three_level();
  const SpectralFrame f = build_frame(sys, {1}, 0.1);
  const auto rep = check_full_connectedness(f, sys.controls);
  EXPECT_TRUE(rep.fully_connected);
  const Eigen::Matrix3d h = perturbed_hamiltonian(sys, {1}, 0.1).real();
  const auto lam = oracle::cubic_eigenvalues(h);
  Eigen::Matrix3d v;
  for (int j = 0; j < 3; ++j) v.col(j) = oracle::cubic_eigenvector(h, lam[j]);
  const Eigen::Matrix3d hat = v.transpose() * sys.controls[0].mat().real() * v;
  for (int j = 0; j < 3; ++j)
    for (int l = 0; l < 3; ++l)
      if (j != l) EXPECT_NEAR(rep.coupling(j, l), std::abs(hat(j, l)), 1e-12);
}

TEST(BuildP, DiagonalDriftGivesDiagonalP) {
  const SpectralFrame f = build_frame(fixture::three_level(), {1}, 0.0);
  const HermitianMatrix p = build_P(f, fixture::p_values());
  ComplexMatrix expected = ComplexMatrix::Zero(3, 3);
  expected(0, 0) = 1.5;
  expected(1, 1) = 2.1;
  expected(2, 2) = 0.01;
  EXPECT_LT((p.mat() - expected).norm(), 1e-15);
}

TEST(BuildP, TildeFrameEqualsConjugatedDiagonal) {
  const SpectralFrame f = build_frame(tilde_system(), {1}, 0.0);
  const HermitianMatrix p = build_P(f, fixture::p_values());
  const ComplexMatrix u = u2().mat();
  ComplexMatrix expected = ComplexMatrix::Zero(3, 3);
  for (int j = 0; j < 3; ++j) {
    const ComplexVector phi = u.adjoint() * ComplexVector::Unit(3, j);
    expected += fixture::p_values()[j] * phi * phi.adjoint();
  }
  EXPECT_LT((p.mat() - expected).norm(), 1e-12);
}

TEST(BuildP, CommutesWithPerturbedHamiltonianAndPositive) {
  const auto sys = fixture::three_level();
  const auto tilde = tilde_system();
  for (const HamiltonianSet* s : {&sys, &tilde}) {
    for (double g : {0.0, 0.01, 0.05, 0.1, 0.2, -0.05}) {
      const SpectralFrame f = build_frame(*s, {1}, g);
      const HermitianMatrix p = build_P(f, fixture::p_values());
      const ComplexMatrix h = perturbed_hamiltonian(*s, {1}, g);
      EXPECT_LE(commutator(p.mat(), h).norm(), 1e-10 * h.norm());
      EXPECT_NEAR(spectrum(p.mat())(0), 0.01, 1e-10);
    }
  }
}

TEST(BuildP, RejectsNonPositiveValues) {
  const SpectralFrame f = build_frame(fixture::three_level(), {1}, 0.0);
  EXPECT_THROW(build_P(f, {1.0, 0.0, 2.0}), ValidationError);
  EXPECT_THROW(build_P(f, {1.0, 2.0}), ValidationError);
}

TEST(DPdGamma, ConstantPHasZeroDerivative) {
  const auto sys = fixture::three_level();
  const HermitianMatrix d = dP_dgamma(sys, {1}, 0.05, {0.7, 0.7, 0.7});
  EXPECT_LT(d.mat().norm(), 1e-8);
  const DesignedObservable obs(sys, {1}, {0.7, 0.7, 0.7});
  EXPECT_LT(obs.dP_analytic(0.05).mat().norm(), 1e-15);
}

TEST(DPdGamma, DiagonalControlsGiveZeroDerivative) {
  auto sys = fixture::three_level();
  ComplexMatrix h = ComplexMatrix::Zero(3, 3);
  h(0, 0) = 1.0;
  h(2, 2) = -0.4;
  sys.controls[0] = HermitianMatrix(h);
  EXPECT_LT(dP_dgamma(sys, {1}, 0.05, fixture::p_values()).mat().norm(), 1e-8);
}

TEST(DPdGamma, FiniteDifferenceMatchesPerturbationFormula) {
  for (const auto& sys : {fixture::three_level(), tilde_system()}) {
    const DesignedObservable obs(sys, {1}, fixture::p_values());
    for (double g : {0.01, 0.05, 0.1}) {
      const ComplexMatrix fd = obs.dP_finite_difference(g).mat();
      const ComplexMatrix an = obs.dP_analytic(g).mat();
      EXPECT_LE((fd - an).norm(), 1e-5 * an.norm()) << "gamma=" << g;
      EXPECT_LE(hermiticity_defect(an), 1e-10);
      EXPECT_LE(hermiticity_defect(fd), 1e-10);
    }
  }
}

TEST(DPdGamma, DegenerateSpectrumRaises) {
  HamiltonianSet sys;
  sys.h0 = HermitianMatrix(ComplexMatrix::Identity(2, 2));
  ComplexMatrix h = ComplexMatrix::Zero(2, 2);
  h(0, 0) = 1.0;
  sys.controls.emplace_back(h);
  EXPECT_THROW(dP_dgamma(sys, {1}, 0.0, {1.0, 2.0}), SingularityError);
}

TEST(PDiagDistinct, Examples) {
  ComplexMatrix d = ComplexMatrix::Zero(3, 3);
  d(0, 0) = 1.5;
  d(1, 1) = 2.1;
  d(2, 2) = 0.01;
  const auto r1 = check_P_diag_distinct(HermitianMatrix(d));
  EXPECT_TRUE(r1.distinct);
  EXPECT_NEAR(r1.min_gap, 0.6, 1e-12);
  EXPECT_EQ(r1.offdiag_mass, 0.0);

  const auto r2 = check_P_diag_distinct(HermitianMatrix(2.0 * ComplexMatrix::Identity(3, 3)));
  EXPECT_FALSE(r2.distinct);
  EXPECT_EQ(r2.min_gap, 0.0);
}

TEST(PDiagDistinct, TildeFrameFromExplicitDiagonal) {
  const HermitianMatrix p = build_P(build_frame(tilde_system(), {1}, 0.0), fixture::p_values());
  const ComplexMatrix u = u2().mat();
  std::vector<double> diag(3, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) diag[i] += fixture::p_values()[j] * std::norm(u(j, i));
  double gap = 1e300;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) gap = std::min(gap, std::abs(diag[i] - diag[j]));
  const auto rep = check_P_diag_distinct(p);
  EXPECT_NEAR(rep.min_gap, gap, 1e-12);
  EXPECT_EQ(rep.distinct, gap > 1e-8);
  EXPECT_GT(rep.offdiag_mass, 0.1);
}

TEST(EigenbasisChange, IdentityRoundTripAndSpectrum) {
  std::mt19937_64 rng(12);
  const SpectralFrame f0 = build_frame(fixture::three_level(), {1}, 0.0);
  const DensityMatrix rho = validate_density(oracle::random_density(rng, {0.2, 0.3, 0.5}));
  EXPECT_LT((to_eigenbasis(rho, f0).mat() - rho.mat()).norm(), 1e-15);
  const SpectralFrame f = build_frame(fixture::three_level(), {1}, 0.13);
  const DensityMatrix hat = to_eigenbasis(rho, f);
  EXPECT_LT((from_eigenbasis(hat, f).mat() - rho.mat()).norm(), 1e-12);
  EXPECT_LT((spectrum(hat.mat()) - spectrum(rho.mat())).norm(), 1e-10);
}

#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace liouctl;

namespace {

DensityMatrix diag_state(double a, double b, double c) {
  ComplexMatrix m = ComplexMatrix::Zero(3, 3);
  m(0, 0) = a;
  m(1, 1) = b;
  m(2, 2) = c;
  return validate_density(m);
}

HermitianMatrix diag_p() {
  ComplexMatrix m = ComplexMatrix::Zero(3, 3);
  m(0, 0) = 1.5;
  m(1, 1) = 2.1;
  m(2, 2) = 0.01;
  return HermitianMatrix(m);
}

// T = i tr([P, H] rho) from the explicit commutator matrix.
double t_direct(const ComplexMatrix& p, const ComplexMatrix& h, const ComplexMatrix& rho) {
  return (cplx(0.0, 1.0) * ((p * h - h * p) * rho).trace()).real();
}

}  // namespace

TEST(LyapunovValue, IdentityGivesOne) {
  std::mt19937_64 rng(31);
  const DensityMatrix rho = validate_density(oracle::random_density(rng, {0.1, 0.2, 0.7}));
  EXPECT_NEAR(lyapunov_value(HermitianMatrix(ComplexMatrix::Identity(3, 3)), rho), 1.0, 1e-15);
}

TEST(LyapunovValue, DiagonalContraction) {
  EXPECT_NEAR(lyapunov_value(diag_p(), diag_state(0, 0, 1)), 0.01, 1e-16);
}

TEST(LyapunovValue, ConjugatedFrameTargetValue) {
  const auto p = fixture::working_problem(TargetTransform::conjugate);
  const HermitianMatrix p0 = DesignedObservable(p.sys, {1}, fixture::p_values()).P(0.0);
  const ComplexMatrix u = diagonalize_target(fixture::rhof()).u2.mat();
  double direct = 0.0;
  for (int j = 0; j < 3; ++j) direct += fixture::p_values()[j] * std::norm(u(j, 2));
  EXPECT_NEAR(lyapunov_value(p0, p.rhof), direct, 1e-12);
  EXPECT_NEAR(direct, 1.9, 1e-12);
}

TEST(LyapunovValue, RejectsNonHermitianProduct) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = 0.5;
  m(1, 1) = 0.5;
  m(0, 1) = cplx(0.0, 0.3);  // not Hermitian, so tr(P rho) can be complex
  ComplexMatrix p = ComplexMatrix::Zero(2, 2);
  p(0, 1) = p(1, 0) = 1.0;
  EXPECT_THROW(lyapunov_value(HermitianMatrix(p), DensityMatrix::trusted(m)), ValidationError);
}

TEST(ControlV, CommutingStateGivesZero) {
  const auto cfg = fixture::controller();
  const auto sys = fixture::three_level();
  const auto v = control_v(diag_p(), sys.controls, diag_state(0.2, 0.3, 0.5), cfg);
  EXPECT_EQ(v[0], 0.0);
}

TEST(ControlV, ZeroAtTargetInWorkingFrame) {
  const auto p = fixture::working_problem();
  const LyapunovController ctl(p.sys, p.controller, p.rhof);
  EXPECT_EQ(ctl.residual_control_at_target(), 0.0);
  const auto ev = ctl.evaluate(p.rhof, 0.0, 0.0);
  EXPECT_EQ(ev.record.gamma, 0.0);
  EXPECT_EQ(ev.record.v[0], 0.0);
}

TEST(ControlV, InitialStateMatchesDirectTrace) {
  const auto p = fixture::working_problem();
  const LyapunovController ctl(p.sys, p.controller, p.rhof);
  const auto ev = ctl.evaluate(p.rho0, 0.0, 0.0);
  const double t = t_direct(ev.P.mat(), p.sys.controls[0].mat(), p.rho0.mat());
  EXPECT_NEAR(ev.record.v[0], 0.25 * t, 1e-14);
  EXPECT_NEAR(ev.record.u[0], ev.record.gamma + ev.record.v[0], 0.0);
}

TEST(ControlV, SignFollowsCommutatorExpectation) {
  std::mt19937_64 rng(32);
  auto cfg = fixture::controller();
  cfg.shapes = {FeedbackShape::odd_saturating};
  cfg.saturation = 0.05;
  const auto sys = fixture::three_level();
  for (int trial = 0; trial < 50; ++trial) {
    const DensityMatrix rho = validate_density(oracle::random_density(rng, {0.0, 0.3, 0.7}));
    const HermitianMatrix p(oracle::random_hermitian(rng, 3));
    const double t = t_direct(p.mat(), sys.controls[0].mat(), rho.mat());
    const auto v = control_v(p, sys.controls, rho, cfg);
    EXPECT_EQ(v[0] > 0.0, t > 0.0);
    EXPECT_LE(std::abs(v[0]), 0.25 * 0.05);
    EXPECT_NEAR(commutator_expectation(p.mat(), sys.controls[0].mat(), rho.mat()), t, 1e-14);
  }
}

TEST(ControllerConfigValidation, Rejections) {
  auto cfg = fixture::controller();
  cfg.mask = {0};
  EXPECT_THROW(cfg.validate(1, 3), ValidationError);
  cfg = fixture::controller();
  cfg.gains = {-0.1};
  EXPECT_THROW(cfg.validate(1, 3), ValidationError);
  cfg = fixture::controller();
  cfg.p_values = {1.0, -1.0, 2.0};
  EXPECT_THROW(cfg.validate(1, 3), ValidationError);
  cfg = fixture::controller();
  cfg.shapes.clear();
  EXPECT_THROW(cfg.validate(1, 3), ValidationError);
}

TEST(VdotDiagnostic, ZeroFeedbackGivesZero) {
  const auto p = fixture::working_problem();
  const DesignedObservable obs(p.sys, {1}, fixture::p_values());
  const auto d = vdot_diagnostic(obs.P(0.05), obs.dP_analytic(0.05), 0.1, p.rho0, p.rhof,
                                 p.sys.controls, {0.0});
  EXPECT_TRUE(d.valid);
  EXPECT_EQ(d.value, 0.0);
  const auto g = gamma_dot_diagnostic(0.1, obs.dP_analytic(0.05), p.rho0, p.rhof, obs.P(0.05),
                                      p.sys.controls, {0.0});
  EXPECT_EQ(g.value, 0.0);
}

TEST(VdotDiagnostic, FrozenPerturbationIsMinusFeedbackPower) {
  std::mt19937_64 rng(33);
  const auto p = fixture::working_problem();
  const DesignedObservable obs(p.sys, {1}, fixture::p_values());
  const auto cfg = fixture::controller();
  for (int trial = 0; trial < 20; ++trial) {
    const DensityMatrix rho = validate_density(oracle::random_density(rng, {0.0, 0.0, 1.0}));
    const HermitianMatrix pg = obs.P(0.07);
    const auto v = control_v(pg, p.sys.controls, rho, cfg);
    const auto d = vdot_diagnostic(pg, obs.dP_analytic(0.07), 0.0, rho, p.rhof, p.sys.controls, v);
    const double t = t_direct(pg.mat(), p.sys.controls[0].mat(), rho.mat());
    EXPECT_NEAR(d.value, -t * v[0], 1e-14);
    EXPECT_LE(d.value, 0.0);
    EXPECT_EQ(d.prefactor, 1.0);
  }
}

TEST(VdotDiagnostic, VanishingDenominatorFlagged) {
  const auto p = fixture::working_problem();
  const DesignedObservable obs(p.sys, {1}, fixture::p_values());
  const HermitianMatrix dp = obs.dP_analytic(0.05);
  const double tr_diff = (dp.mat() * (p.rho0.mat() - p.rhof.mat())).trace().real();
  const double theta_d = 1.0 / tr_diff;
  const auto d = vdot_diagnostic(obs.P(0.05), dp, theta_d, p.rho0, p.rhof, p.sys.controls, {0.1});
  EXPECT_FALSE(d.valid);
  EXPECT_TRUE(std::isnan(d.value));
  const auto g =
      gamma_dot_diagnostic(theta_d, dp, p.rho0, p.rhof, obs.P(0.05), p.sys.controls, {0.1});
  EXPECT_FALSE(g.valid);
}

TEST(GammaDotDiagnostic, ConstantPVanishes) {
  const auto p = fixture::working_problem();
  const DesignedObservable obs(p.sys, {1}, {0.6, 0.6, 0.6});
  std::mt19937_64 rng(34);
  const DensityMatrix rho = validate_density(oracle::random_density(rng, {0.0, 0.0, 1.0}));
  const auto g = gamma_dot_diagnostic(0.1, obs.dP_analytic(0.0), rho, p.rhof, obs.P(0.0),
                                      p.sys.controls, {0.37});
  EXPECT_NEAR(g.value, 0.0, 1e-15);
}

TEST(GammaDotDiagnostic, FrameIndependentOfGammaChainRule) {
  // A diagonal masked control leaves the frame fixed, so dP = 0 and
  // gamma = M tr(P (rho - rho_f)) with constant P. Along the flow
  // d/dt tr(P rho) = -sum_k u_k T_k, hence gamma-dot = -M v_2 T_2.
  HamiltonianSet sys = fixture::three_level();
  ComplexMatrix hd = ComplexMatrix::Zero(3, 3);
  hd(0, 0) = 1.0;
  hd(2, 2) = -1.0;
  ComplexMatrix hx = ComplexMatrix::Zero(3, 3);
  hx(0, 1) = hx(1, 0) = hx(1, 2) = hx(2, 1) = 1.0;
  sys.controls = {HermitianMatrix(hd), HermitianMatrix(hx)};
  ControllerConfig cfg = fixture::controller(0.1, 0.0);
  cfg.mask = {1, 0};
  cfg.gains = {0.0, 0.5};
  cfg.shapes = {FeedbackShape::identity, FeedbackShape::identity};
  const auto base = fixture::working_problem();
  const LyapunovController ctl(sys, cfg, base.rhof);

  std::mt19937_64 rng(35);
  const DensityMatrix rho = validate_density(oracle::random_density(rng, {0.0, 0.0, 1.0}));
  const auto ev = ctl.evaluate(rho, 0.0, 0.0);
  const double t2 = t_direct(ev.P.mat(), hx, rho.mat());
  EXPECT_NEAR(ev.record.gamma_dot_analytic, -0.1 * ev.record.v[1] * t2, 1e-14);

  const double h = 1e-4;
  SolveOptions tight;
  tight.tol = 1e-15;
  cfg.gamma_solve = tight;
  const LyapunovController fine(sys, cfg, base.rhof);
  const double gp = fine.solve(step(rho, sys, ev.record.u, h), ev.record.gamma).value;
  const double gm = fine.solve(step(rho, sys, ev.record.u, -h), ev.record.gamma).value;
  EXPECT_NEAR((gp - gm) / (2 * h), ev.record.gamma_dot_analytic,
              1e-6 * std::abs(ev.record.gamma_dot_analytic));
}

TEST(LyapunovControllerEval, RecordInvariants) {
  auto sys = fixture::three_level();
  ComplexMatrix h2 = ComplexMatrix::Zero(3, 3);
  h2(1, 2) = h2(2, 1) = 1.0;
  sys.controls.emplace_back(h2);
  ControllerConfig cfg = fixture::controller();
  cfg.mask = {1, 0};
  cfg.gains = {0.25, 0.4};
  cfg.shapes = {FeedbackShape::identity, FeedbackShape::identity};
  const auto base = fixture::working_problem();
  const LyapunovController ctl(sys, cfg, base.rhof);
  const auto ev = ctl.evaluate(base.rho0, 1.5, 0.0);
  EXPECT_EQ(ev.record.t, 1.5);
  EXPECT_EQ(ev.record.u[0], ev.record.gamma + ev.record.v[0]);
  EXPECT_EQ(ev.record.u[1], ev.record.v[1]);
  EXPECT_TRUE(std::isfinite(ev.record.vdot_analytic));
  EXPECT_LE(ev.record.vdot_analytic, 0.0);
}

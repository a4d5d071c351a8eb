#pragma once

// Lyapunov function V = tr(P_gamma rho), feedback v_k = K_k f_k(i tr([P, Hk] rho)),
// total control u_k = C_k gamma + v_k, and the analytic closed-loop rates of
// gamma and V used as diagnostics.

#include "liouctl/implicit_perturbation.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace liouctl {

inline constexpr double kImagTol = 1e-12;

enum class FeedbackShape { identity, odd_saturating };

struct ControllerConfig {
  ControlMask mask;
  ThetaSpec theta;
  std::vector<double> gains;             // K_k >= 0
  std::vector<FeedbackShape> shapes;     // f_k
  double saturation = 1.0;               // odd_saturating: f(x) = s * tanh(x / s)
  std::vector<double> p_values;          // P_1..P_N > 0
  SolveOptions gamma_solve;

  void validate(std::size_t r, Eigen::Index n) const {
    validate_mask(mask, r);
    bool any = false;
    for (int c : mask) any = any || c == 1;
    if (!any) throw ValidationError("controller: at least one mask entry must be 1");
    theta.validate();
    if (gains.size() != r) throw ValidationError("controller: gains length != number of controls");
    for (double k : gains) {
      if (!(k >= 0.0) || !std::isfinite(k)) throw ValidationError("controller: gains must be >= 0");
    }
    if (shapes.size() != r) throw ValidationError("controller: f_kind length != number of controls");
    if (!(saturation > 0.0)) throw ValidationError("controller: saturation must be > 0");
    validate_p_values(p_values, n);
  }
};

inline double lyapunov_value(const HermitianMatrix& p, const DensityMatrix& rho) {
  require_same_square(p.mat(), rho.mat(), "lyapunov_value");
  const cplx v = (p.mat() * rho.mat()).trace();
  if (std::abs(v.imag()) > kImagTol) {
    std::ostringstream os;
    os << "lyapunov_value: tr(P rho) has imaginary part " << v.imag();
    throw ValidationError(os.str());
  }
  return v.real();
}

/// T = i tr([P, H] rho), from the two traces directly.
inline double commutator_expectation(const ComplexMatrix& p, const ComplexMatrix& h,
                                     const ComplexMatrix& rho) {
  const ComplexMatrix prho = p * rho;
  const ComplexMatrix hrho = h * rho;
  const cplx t = cplx(0.0, 1.0) * ((p * hrho).trace() - (h * prho).trace());
  if (std::abs(t.imag()) > kImagTol) {
    std::ostringstream os;
    os << "i tr([P, H] rho) has imaginary part " << t.imag();
    throw ValidationError(os.str());
  }
  return t.real();
}

inline double feedback_shape(FeedbackShape f, double x, double saturation) {
  switch (f) {
    case FeedbackShape::identity:
      return x;
    case FeedbackShape::odd_saturating:
      return saturation * std::tanh(x / saturation);
  }
  return x;
}

inline std::vector<double> commutator_expectations(const HermitianMatrix& p,
                                                   const std::vector<HermitianMatrix>& hks,
                                                   const DensityMatrix& rho) {
  std::vector<double> t;
  t.reserve(hks.size());
  for (const auto& hk : hks) t.push_back(commutator_expectation(p.mat(), hk.mat(), rho.mat()));
  return t;
}

inline std::vector<double> control_v(const HermitianMatrix& p,
                                     const std::vector<HermitianMatrix>& hks,
                                     const DensityMatrix& rho, const ControllerConfig& cfg) {
  const auto t = commutator_expectations(p, hks, rho);
  std::vector<double> v(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    v[k] = cfg.gains[k] * feedback_shape(cfg.shapes[k], t[k], cfg.saturation);
  }
  return v;
}

/// Result of an analytic rate formula. `valid` is false when the denominator
/// 1 - theta' tr(dP (rho - rho_f)) is within `kDenominatorGuard` of zero.
struct RateDiagnostic {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
  double denominator = 0.0;
  double prefactor = 0.0;  // V-dot only: (1 + theta' tr(dP rho_f)) / denominator
};

inline constexpr double kDenominatorGuard = 1e-12;

namespace detail {

inline double feedback_power(const HermitianMatrix& p, const std::vector<HermitianMatrix>& hks,
                             const DensityMatrix& rho, const std::vector<double>& v) {
  const auto t = commutator_expectations(p, hks, rho);
  double s = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) s += t[k] * v[k];
  return s;
}

}  // namespace detail

/// dV/dt = -(1 + theta' tr(dP rho_f)) / (1 - theta' tr(dP (rho - rho_f))) * sum_k T_k v_k.
inline RateDiagnostic vdot_diagnostic(const HermitianMatrix& p, const HermitianMatrix& dp,
                                      double theta_deriv, const DensityMatrix& rho,
                                      const DensityMatrix& rho_f,
                                      const std::vector<HermitianMatrix>& hks,
                                      const std::vector<double>& v) {
  RateDiagnostic d;
  const double tr_f = (dp.mat() * rho_f.mat()).trace().real();
  const double tr_diff = (dp.mat() * (rho.mat() - rho_f.mat())).trace().real();
  d.denominator = 1.0 - theta_deriv * tr_diff;
  if (std::abs(d.denominator) <= kDenominatorGuard) return d;
  d.prefactor = (1.0 + theta_deriv * tr_f) / d.denominator;
  d.value = -d.prefactor * detail::feedback_power(p, hks, rho, v);
  d.valid = true;
  return d;
}

/// dgamma/dt = theta' sum_k T_k v_k / (theta' tr(dP (rho - rho_f)) - 1).
inline RateDiagnostic gamma_dot_diagnostic(double theta_deriv, const HermitianMatrix& dp,
                                           const DensityMatrix& rho, const DensityMatrix& rho_f,
                                           const HermitianMatrix& p,
                                           const std::vector<HermitianMatrix>& hks,
                                           const std::vector<double>& v) {
  RateDiagnostic d;
  const double tr_diff = (dp.mat() * (rho.mat() - rho_f.mat())).trace().real();
  d.denominator = 1.0 - theta_deriv * tr_diff;
  if (std::abs(d.denominator) <= kDenominatorGuard) return d;
  d.value = -theta_deriv * detail::feedback_power(p, hks, rho, v) / d.denominator;
  d.valid = true;
  return d;
}

struct ControlRecord {
  double t = 0.0;
  double gamma = 0.0;
  std::vector<double> v;
  std::vector<double> u;
  double V = 0.0;
  double vdot_analytic = std::numeric_limits<double>::quiet_NaN();
  double gamma_dot_analytic = std::numeric_limits<double>::quiet_NaN();
  double gamma_residual = 0.0;
  int gamma_iterations = 0;
  bool negative_theta_argument = false;
};

/// Everything the closed loop computes from one state.
struct ControlEvaluation {
  ControlRecord record;
  GammaSolve solve;
  HermitianMatrix P;
};

class LyapunovController {
 public:
  LyapunovController(HamiltonianSet sys, ControllerConfig cfg, DensityMatrix rho_f)
      : cfg_(std::move(cfg)),
        rho_f_(std::move(rho_f)),
        obs_(std::move(sys), cfg_.mask, cfg_.p_values) {
    cfg_.validate(obs_.system().num_controls(), obs_.system().dim());
    if (rho_f_.dim() != obs_.system().dim()) {
      throw DimensionError("controller: target dimension differs from Hamiltonians");
    }
  }

  const ControllerConfig& config() const { return cfg_; }
  const DesignedObservable& observable() const { return obs_; }
  const HamiltonianSet& system() const { return obs_.system(); }
  const DensityMatrix& target() const { return rho_f_; }

  GammaSolve solve(const DensityMatrix& rho, double warm_start) const {
    return solve_gamma(rho, rho_f_, obs_, cfg_.theta, warm_start, cfg_.gamma_solve);
  }

  /// Solves gamma, builds P_gamma and the feedback; u_k = C_k gamma + v_k.
  /// With `diagnostics`, also evaluates the analytic rates.
  ControlEvaluation evaluate(const DensityMatrix& rho, double t, double warm_start,
                             bool diagnostics = true) const {
    ControlEvaluation ev;
    ev.solve = solve(rho, warm_start);
    const double gamma = ev.solve.value;
    const SpectralFrame frame = obs_.frame(gamma);
    ev.P = build_P(frame, cfg_.p_values);
    auto& rec = ev.record;
    rec.t = t;
    rec.gamma = gamma;
    rec.gamma_residual = ev.solve.residual;
    rec.gamma_iterations = ev.solve.iterations;
    rec.negative_theta_argument = ev.solve.negative_argument;
    rec.v = control_v(ev.P, system().controls, rho, cfg_);
    rec.u.resize(rec.v.size());
    for (std::size_t k = 0; k < rec.v.size(); ++k) {
      rec.u[k] = (cfg_.mask[k] ? gamma : 0.0) + rec.v[k];
    }
    rec.V = lyapunov_value(ev.P, rho);
    if (diagnostics && frame.min_eigen_gap() >= 1e-8) {
      const HermitianMatrix dp = dP_dgamma_perturbative(frame, obs_.h_prime(), cfg_.p_values);
      const double theta_d = theta_eval(cfg_.theta, ev.solve.theta_argument).derivative;
      const auto vd = vdot_diagnostic(ev.P, dp, theta_d, rho, rho_f_, system().controls, rec.v);
      const auto gd =
          gamma_dot_diagnostic(theta_d, dp, rho, rho_f_, ev.P, system().controls, rec.v);
      rec.vdot_analytic = vd.value;
      rec.gamma_dot_analytic = gd.value;
    }
    return ev;
  }

  /// |v| at the target with gamma = 0; nonzero when the target is not a
  /// closed-loop equilibrium (complex data).
  double residual_control_at_target() const {
    const HermitianMatrix p0 = obs_.P(0.0);
    const auto v = control_v(p0, system().controls, rho_f_, cfg_);
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }

 private:
  ControllerConfig cfg_;
  DensityMatrix rho_f_;
  DesignedObservable obs_;
};

}  // namespace liouctl

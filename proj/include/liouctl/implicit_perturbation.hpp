#pragma once

// Shared implicit perturbation gamma, defined as the fixed point
//   gamma = theta( tr(P_gamma rho) - tr(P_gamma rho_f) ),
// and the existence bound |theta'| < 1 / (2 (1 + C)), C = max ||dP/dgamma||_2.

#include "liouctl/spectral_frame.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace liouctl {

class SolverError : public Error {
 public:
  using Error::Error;
};

enum class ThetaKind { linear, saturating };

struct ThetaSpec {
  ThetaKind kind = ThetaKind::linear;
  double slope = 0.1;       // M; 0 disables the perturbation
  double gamma_star = 0.2;  // codomain cap for the saturating kind
  // Strict mode: theta(s) = 0 for s < 0. Off by default, so the linear kind
  // evaluates M * s for negative arguments too.
  bool clamp_negative = false;
  // Bisection bracket half-width for the linear kind.
  double gamma_max = 1.0;

  void validate() const {
    if (!(slope >= 0.0) || !std::isfinite(slope)) {
      throw ValidationError("theta: slope must be finite and >= 0");
    }
    if (kind == ThetaKind::saturating && !(gamma_star > 0.0)) {
      throw ValidationError("theta: gamma_star must be > 0 for the saturating kind");
    }
    if (!(gamma_max > 0.0)) throw ValidationError("theta: gamma_max must be > 0");
  }

  double bracket_limit() const { return kind == ThetaKind::saturating ? gamma_star : gamma_max; }
  double sup_derivative() const { return slope; }
};

struct ThetaValue {
  double value;
  double derivative;
};

inline ThetaValue theta_eval(const ThetaSpec& spec, double s) {
  if (spec.clamp_negative && s < 0.0) return {0.0, 0.0};
  switch (spec.kind) {
    case ThetaKind::linear:
      return {spec.slope * s, spec.slope};
    case ThetaKind::saturating: {
      const double x = spec.slope * s / spec.gamma_star;
      const double t = std::tanh(x);
      return {spec.gamma_star * t, spec.slope * (1.0 - t * t)};
    }
  }
  return {0.0, 0.0};
}

enum class SolveMethod { fixed_point, bisection };

inline const char* to_string(SolveMethod m) {
  return m == SolveMethod::fixed_point ? "fixed-point" : "bisection";
}

struct GammaSolve {
  double value = 0.0;
  double residual = 0.0;  // |gamma - theta(Delta(gamma))|
  int iterations = 0;
  SolveMethod method = SolveMethod::fixed_point;
  double theta_argument = 0.0;  // Delta at the returned gamma
  bool negative_argument = false;
};

/// Delta(gamma) = tr(P_gamma (rho - rho_f)).
inline double lyapunov_gap(const DesignedObservable& obs, double gamma, const ComplexMatrix& diff) {
  return (obs.P(gamma).mat() * diff).trace().real();
}

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 200;
  int oscillation_window = 10;
  double damping = 0.5;
};

/// Fixed-point iteration from `warm_start`, falling back to bisection on
/// F(gamma) = gamma - theta(Delta(gamma)) if it does not converge.
inline GammaSolve solve_gamma(const DensityMatrix& rho, const DensityMatrix& rho_f,
                              const DesignedObservable& obs, const ThetaSpec& theta,
                              double warm_start = 0.0, const SolveOptions& opt = {}) {
  require_same_square(rho.mat(), rho_f.mat(), "solve_gamma");
  if (!std::isfinite(warm_start)) throw ValidationError("solve_gamma: warm start not finite");
  const ComplexMatrix diff = rho.mat() - rho_f.mat();

  GammaSolve out;
  double g = warm_start;
  double prev_step = 0.0;
  int alternating = 0;
  bool damped = false;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const double delta = lyapunov_gap(obs, g, diff);
    const double g_new = theta_eval(theta, delta).value;
    const double step = g_new - g;
    if (std::abs(step) <= opt.tol) {
      // Accept the updated iterate and report its own residual.
      const double delta_new = step == 0.0 ? delta : lyapunov_gap(obs, g_new, diff);
      out.value = g_new;
      out.residual = std::abs(theta_eval(theta, delta_new).value - g_new);
      out.iterations = it;
      out.theta_argument = delta_new;
      out.negative_argument = delta_new < 0.0;
      if (out.residual <= opt.tol) return out;
      g = g_new;
      continue;
    }
    if (prev_step != 0.0 && (step > 0.0) != (prev_step > 0.0)) {
      if (++alternating >= opt.oscillation_window) damped = true;
    } else {
      alternating = 0;
    }
    prev_step = step;
    g = damped ? g + opt.damping * step : g_new;
  }

  // Bisection fallback.
  const double hi = theta.bracket_limit();
  const double lo = theta.clamp_negative ? 0.0 : -hi;
  auto F = [&](double x) { return x - theta_eval(theta, lyapunov_gap(obs, x, diff)).value; };
  double a = lo, b = hi;
  double fa = F(a), fb = F(b);
  if (fa == 0.0) b = a, fb = fa;
  if (fb == 0.0) a = b, fa = fb;
  if ((fa > 0.0) == (fb > 0.0) && fa != 0.0) {
    std::ostringstream os;
    os << "solve_gamma: fixed point did not converge in " << opt.max_iter
       << " iterations and bisection bracket [" << lo << ", " << hi
       << "] has F = " << fa << ", " << fb << " (same sign)";
    throw SolverError(os.str());
  }
  int it = 0;
  double mid = 0.5 * (a + b);
  while (it < 200 && b - a > 0.0) {
    ++it;
    mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    const double fm = F(mid);
    if (std::abs(fm) <= 0.1 * opt.tol) break;
    if ((fm > 0.0) == (fa > 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  const double delta = lyapunov_gap(obs, mid, diff);
  out.value = mid;
  out.residual = std::abs(mid - theta_eval(theta, delta).value);
  out.iterations = opt.max_iter + it;
  out.method = SolveMethod::bisection;
  out.theta_argument = delta;
  out.negative_argument = delta < 0.0;
  if (!(out.residual <= opt.tol)) {
    std::ostringstream os;
    os << "solve_gamma: bisection residual " << out.residual << " above tol " << opt.tol;
    throw SolverError(os.str());
  }
  return out;
}

struct ExistenceMargin {
  double c_finite_difference = 0.0;  // max over grid of ||dP/dgamma||_2
  double c_perturbative = 0.0;
  double c_star = 1.0;               // 1 + C
  double bound = 0.5;                // 1 / (2 C*)
  double sup_theta_derivative = 0.0;
  bool satisfied = false;
  double worst_gamma = 0.0;          // grid point attaining C
};

/// Existence bound check with C_k = 1 on the mask. C uses the spectral norm
/// and the finite-difference derivative; the perturbative value is reported
/// alongside for comparison.
inline ExistenceMargin existence_margin(const ThetaSpec& theta, const DesignedObservable& obs,
                                  const std::vector<double>& gamma_grid) {
  theta.validate();
  ExistenceMargin m;
  for (double g : gamma_grid) {
    const double c_fd = spectral_norm(obs.dP_finite_difference(g).mat());
    const double c_pt = spectral_norm(obs.dP_analytic(g).mat());
    if (c_fd > m.c_finite_difference) {
      m.c_finite_difference = c_fd;
      m.worst_gamma = g;
    }
    m.c_perturbative = std::max(m.c_perturbative, c_pt);
  }
  m.c_star = 1.0 + m.c_finite_difference;
  m.bound = 1.0 / (2.0 * m.c_star);
  m.sup_theta_derivative = theta.sup_derivative();
  m.satisfied = m.sup_theta_derivative < m.bound;
  return m;
}

inline std::vector<double> uniform_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(lo + step * i);
  return g;
}

}  // namespace liouctl

#pragma once

// Closed-loop integration of i d(rho)/dt = [H0 + sum_k u_k Hk, rho] with
// controls held constant over each step and exact unitary propagation.

#include "liouctl/target_frame.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace liouctl {

inline HermitianMatrix total_hamiltonian(const HamiltonianSet& sys, const std::vector<double>& u) {
  if (u.size() != sys.num_controls()) {
    throw DimensionError("total_hamiltonian: control vector length mismatch");
  }
  ComplexMatrix h = sys.h0.mat();
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!std::isfinite(u[k])) throw ValidationError("total_hamiltonian: non-finite control");
    h += u[k] * sys.controls[k].mat();
  }
  return HermitianMatrix(0.5 * (h + h.adjoint()));
}

/// rho' = U rho U^dagger, U = exp(-i (H0 + sum u_k Hk) dt).
inline DensityMatrix step(const DensityMatrix& rho, const HamiltonianSet& sys,
                          const std::vector<double>& u, double dt) {
  const UnitaryMatrix prop = expm_unitary(total_hamiltonian(sys, u), dt);
  ComplexMatrix next = prop.mat() * rho.mat() * prop.mat().adjoint();
  return DensityMatrix::trusted(std::move(next));
}

struct StepConservation {
  double trace_err = 0.0;      // |tr rho - 1|
  double herm_err = 0.0;       // ||rho - rho^dagger||_F
  double spectrum_drift = 0.0; // max_j |lambda_j(rho) - lambda_j(rho0)|
};

inline StepConservation measure_conservation(const DensityMatrix& rho, const RealVector& spec0) {
  StepConservation c;
  c.trace_err = std::abs(rho.mat().trace() - cplx(1.0, 0.0));
  c.herm_err = hermiticity_defect(rho.mat());
  c.spectrum_drift = (spectrum(rho.mat()) - spec0).cwiseAbs().maxCoeff();
  return c;
}

struct TrajectoryRecord {
  std::vector<double> times;           // one per recorded row
  std::vector<DensityMatrix> states;   // same length as times
  std::vector<ControlRecord> controls; // same length as times
  std::vector<int> recorded_steps;     // step index of each recorded row
  std::vector<StepConservation> conservation;  // every step, including unrecorded ones
  std::vector<double> lyapunov;        // V at every step
  std::vector<double> gamma_residuals; // at every step
  std::vector<int> gamma_iterations;   // at every step
  bool closed_loop = true;
  bool early_stopped = false;
  int steps_taken = 0;
  int negative_theta_steps = 0;
  DensityMatrix final_state;
};

class SimulationError : public Error {
 public:
  SimulationError(int step_index, const std::string& what)
      : Error(what), step_index_(step_index) {}
  int step_index() const { return step_index_; }

 private:
  int step_index_;
};

struct SimulateOptions {
  bool diagnostics = true;
};

/// Per step: solve gamma (warm-started from the previous step), build P_gamma
/// and the feedback, then propagate with u held constant. Row i holds the
/// state at t_i and the controls computed from it.
inline TrajectoryRecord simulate(const SimulationProblem& problem, const SimulateOptions& opt = {}) {
  problem.validate();
  const LyapunovController controller(problem.sys, problem.controller, problem.rhof);
  const RealVector spec0 = spectrum(problem.rho0.mat());
  const int n_steps = problem.num_steps();

  TrajectoryRecord traj;
  bool any_gain = false;
  for (double k : problem.controller.gains) any_gain = any_gain || k > 0.0;
  traj.closed_loop = any_gain || problem.controller.theta.slope > 0.0;

  DensityMatrix rho = problem.rho0;
  double warm = 0.0;
  for (int i = 0; i <= n_steps; ++i) {
    const double t = i * problem.dt;
    ControlEvaluation ev;
    try {
      ev = controller.evaluate(rho, t, warm, opt.diagnostics);
    } catch (const BranchCrossingError& e) {
      std::ostringstream os;
      os << "step " << i << ": " << e.what();
      throw SimulationError(i, os.str());
    } catch (const SolverError& e) {
      std::ostringstream os;
      os << "step " << i << ": " << e.what();
      throw SimulationError(i, os.str());
    }
    warm = ev.record.gamma;
    if (ev.record.negative_theta_argument) ++traj.negative_theta_steps;
    traj.lyapunov.push_back(ev.record.V);
    traj.gamma_residuals.push_back(ev.record.gamma_residual);
    traj.gamma_iterations.push_back(ev.record.gamma_iterations);
    traj.conservation.push_back(measure_conservation(rho, spec0));

    const bool stop_now =
        std::isfinite(problem.early_stop) &&
        transition_probability(rho, problem.rhof) >= problem.early_stop;
    if (i % problem.record_stride == 0 || i == n_steps || stop_now) {
      traj.times.push_back(t);
      traj.states.push_back(rho);
      traj.controls.push_back(ev.record);
      traj.recorded_steps.push_back(i);
    }
    if (i == n_steps) break;
    if (stop_now) {
      traj.early_stopped = true;
      break;
    }
    rho = step(rho, problem.sys, ev.record.u, problem.dt);
    traj.steps_taken = i + 1;
  }
  traj.final_state = rho;
  return traj;
}

struct ConservationSummary {
  double max_trace_err = 0.0;
  double max_herm_err = 0.0;
  double max_spectrum_drift = 0.0;
  // Largest V(t+dt) - V(t); only meaningful when closed_loop is set.
  double max_v_increase = -std::numeric_limits<double>::infinity();
  bool closed_loop = true;
};

inline ConservationSummary conservation_report(const TrajectoryRecord& traj) {
  if (traj.conservation.empty()) throw ValidationError("conservation_report: empty trajectory");
  ConservationSummary s;
  s.closed_loop = traj.closed_loop;
  for (const auto& c : traj.conservation) {
    s.max_trace_err = std::max(s.max_trace_err, c.trace_err);
    s.max_herm_err = std::max(s.max_herm_err, c.herm_err);
    s.max_spectrum_drift = std::max(s.max_spectrum_drift, c.spectrum_drift);
  }
  for (std::size_t i = 1; i < traj.lyapunov.size(); ++i) {
    s.max_v_increase = std::max(s.max_v_increase, traj.lyapunov[i] - traj.lyapunov[i - 1]);
  }
  if (traj.lyapunov.size() < 2) s.max_v_increase = 0.0;
  return s;
}

}  // namespace liouctl

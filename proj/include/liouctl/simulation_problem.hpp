#pragma once

#include "liouctl/lyapunov_controller.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace liouctl {

inline constexpr double kSpectrumMatchTol = 1e-8;

struct SimulationProblem {
  HamiltonianSet sys;
  DensityMatrix rho0;
  DensityMatrix rhof;
  ControllerConfig controller;
  double dt = 0.01;
  double duration = 30.0;
  int record_stride = 1;
  // Stop once the transition probability reaches this value; NaN disables.
  double early_stop = std::numeric_limits<double>::quiet_NaN();

  int num_steps() const { return static_cast<int>(std::llround(duration / dt)); }

  void validate() const {
    sys.validate();
    const Eigen::Index n = sys.dim();
    if (rho0.dim() != n || rhof.dim() != n) {
      throw DimensionError("problem: state dimension differs from Hamiltonians");
    }
    controller.validate(sys.num_controls(), n);
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("problem: dt must be > 0");
    if (!(duration >= 0.0) || !std::isfinite(duration)) {
      throw ValidationError("problem: duration must be >= 0");
    }
    if (record_stride < 1) throw ValidationError("problem: record_stride must be >= 1");
    const RealVector s0 = spectrum(rho0.mat());
    const RealVector sf = spectrum(rhof.mat());
    const double mismatch = (s0 - sf).cwiseAbs().maxCoeff();
    if (mismatch > kSpectrumMatchTol) {
      std::ostringstream os;
      os << "problem: rho0 and rhof are not unitarily equivalent (spectra differ by "
         << mismatch << ")";
      throw ValidationError(os.str());
    }
  }
};

}  // namespace liouctl

#pragma once

// The three-level degenerate example used across the suites.

#include "liouctl/commands.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace fixture {

using namespace liouctl;

inline HamiltonianSet three_level() {
  HamiltonianSet sys;
  ComplexMatrix h0 = ComplexMatrix::Zero(3, 3);
  h0(0, 0) = 0.3;
  h0(1, 1) = 0.6;
  h0(2, 2) = 0.9;
  ComplexMatrix h1 = ComplexMatrix::Zero(3, 3);
  h1(0, 1) = h1(1, 0) = h1(0, 2) = h1(2, 0) = 1.0;
  sys.h0 = HermitianMatrix(h0);
  sys.controls.emplace_back(h1);
  return sys;
}

inline ComplexVector psi0() {
  ComplexVector v(3);
  v << 1.0 / std::sqrt(6.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(2.0);
  return v;
}

inline ComplexVector psif() {
  ComplexVector v(3);
  v << 1.0 / std::sqrt(3.0), std::sqrt(2.0 / 3.0), 0.0;
  return v;
}

inline DensityMatrix rho0() { return validate_density(psi0() * psi0().adjoint()); }
inline DensityMatrix rhof() { return validate_density(psif() * psif().adjoint()); }

inline const std::vector<double>& p_values() {
  static const std::vector<double> p{1.5, 2.1, 0.01};
  return p;
}

inline ControllerConfig controller(double m = 0.1, double k = 0.25) {
  ControllerConfig c;
  c.mask = {1};
  c.theta.slope = m;
  c.gains = {k};
  c.shapes = {FeedbackShape::identity};
  c.p_values = p_values();
  return c;
}

// Original-frame problem (non-diagonal target).
inline SimulationProblem original_problem(double dt = 0.01, double duration = 30.0) {
  SimulationProblem p;
  p.sys = three_level();
  p.rho0 = rho0();
  p.rhof = rhof();
  p.controller = controller();
  p.dt = dt;
  p.duration = duration;
  return p;
}

inline SimulationProblem working_problem(TargetTransform mode = TargetTransform::states_only,
                                         double dt = 0.01, double duration = 30.0) {
  const SimulationProblem p = original_problem(dt, duration);
  return transform_problem(p, diagonalize_target(p.rhof), mode);
}

inline std::string config_path() { return std::string(LIOUCTL_SOURCE_DIR) + "/configs/three_level_transfer.json"; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json bundled_json() { return json::parse(read_text(config_path())); }

}  // namespace fixture

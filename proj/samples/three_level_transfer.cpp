// Builds the three-level degenerate problem in code, checks the perturbed
// spectrum, and runs the closed loop for 30 a.u.

#include "liouctl/liouville_dynamics.hpp"

#include <cmath>
#include <cstdio>

using namespace liouctl;

int main() {
  HamiltonianSet sys;
  sys.h0 = HermitianMatrix(RealVector::LinSpaced(3, 0.3, 0.9).cast<cplx>().asDiagonal());
  ComplexMatrix h1 = ComplexMatrix::Zero(3, 3);
  h1(0, 1) = h1(1, 0) = h1(0, 2) = h1(2, 0) = 1.0;
  sys.controls.emplace_back(h1);

  ComplexVector psi0(3), psif(3);
  psi0 << 1.0 / std::sqrt(6.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(2.0);
  psif << 1.0 / std::sqrt(3.0), std::sqrt(2.0 / 3.0), 0.0;
  const DensityMatrix rho0 = validate_density(psi0 * psi0.adjoint());
  const DensityMatrix rhof = validate_density(psif * psif.adjoint());

  for (double g : {0.0, 0.1}) {
    const SpectralFrame f = build_frame(sys, {1}, g);
    std::printf("gamma=%.2f strongly_regular=%d fully_connected=%d\n", g,
                check_strong_regularity(f).strongly_regular,
                check_full_connectedness(f, sys.controls).fully_connected);
  }

  // Rotate the states into the eigenbasis of the target; H0 and H1 stay put.
  const TargetFrame frame = diagonalize_target(rhof);
  SimulationProblem problem;
  problem.sys = sys;
  problem.rho0 = rho0;
  problem.rhof = rhof;
  problem.controller.mask = {1};
  problem.controller.theta.slope = 0.1;
  problem.controller.gains = {0.25};
  problem.controller.shapes = {FeedbackShape::identity};
  problem.controller.p_values = {1.5, 2.1, 0.01};
  problem = transform_problem(problem, frame, TargetTransform::states_only);

  const TrajectoryRecord traj = simulate(problem);
  const DensityMatrix out = map_back(traj.final_state, frame);
  std::printf("rho_11=%.5f rho_22=%.5f rho_33=%.7f P_tr=%.5f\n", out.mat()(0, 0).real(),
              out.mat()(1, 1).real(), out.mat()(2, 2).real(),
              transition_probability(traj.final_state, problem.rhof));
  return 0;
}

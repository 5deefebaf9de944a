// Solves a two-dimensional shrinker on a box, then runs the Jacobi, rotation
// and drift checks on the unit ball and prints one line per check.

#include <cmath>
#include <cstdio>

#include "lmcf.hpp"

int main() {
  using namespace lmcf;
  const GridSpec spec(2, 1.25, 49);
  const PhaseSpec phase = PhaseSpec::shrinker(2.6, 1.0);
  auto problem = DirichletProblem::from_function(
      spec, phase, [](const Vec& x) { return 0.5 * (3.0 * x(0) * x(0) + 4.0 * x(1) * x(1)); });
  problem.initial_guess = problem.boundary;

  const auto [u, report] = solve(problem);
  std::printf("newton iterations      %d, residual %.3e\n", report.iterations, report.residual_history.back());

  const BallRegion unit = BallRegion::origin(2, 1.0);
  const double osc = ball_oscillation(u, unit);
  JacobiOptions jo;
  jo.ball_context = BallContext{osc};
  const auto jac = verify_jacobi_pointwise(u, phase, unit, jo);
  std::printf("pointwise Jacobi       %zu nodes, %d violations, min margin %.3e\n", jac.points.size(),
              jac.violations, jac.min_margin);

  const auto integral = verify_integral_jacobi(u, phase, 0.5);
  std::printf("integral Jacobi        lhs %.4g, bound %.4g, headroom %.3g\n", integral.lhs, integral.rhs,
              integral.headroom);

  const auto rg = rotate(u, unit);
  double max_grad = 0.0;
  for (const auto& s : rg.samples) max_grad = std::max(max_grad, s.grad.norm());
  const auto bounds = verify_rotation_bounds(rg, 1.0, max_grad);
  std::printf("rotation bounds        %s, gbar eigenvalues in [%.4f, %.4f]\n", bounds.ok() ? "ok" : "FAILED",
              bounds.gbar_min_eig, bounds.gbar_max_eig);

  const auto au = audit(phase, graph_box_of(u, unit), 64);
  const auto drift = rotated_drift_bound(rg, phase, osc, au.nu1);
  std::printf("rotated drift          %.4f <= %.4f\n", drift.max_coefficient, drift.bound);
  return jac.ok() && integral.ok && bounds.ok() && drift.ok ? 0 : 1;
}

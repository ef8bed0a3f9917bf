// Porous-medium sanity demo: with chemotaxis switched off and sigma = 0 the
// solver integrates u_t = div(u grad p(u)), whose exact spreading solution is
// the Barenblatt profile.  Start on the profile at t0 and measure how far the
// numerical state is from the exact profile at t0 + T on two grids.
#include <cstdio>

#include "kslab/core.hpp"
#include "kslab/metrics.hpp"
#include "kslab/solver.hpp"

using namespace kslab;

int main() {
  const double m = 2.0, mass_total = 1.0, t0 = 0.1, T = 0.1;
  std::printf("degenerate PME vs Barenblatt, d=2 m=%.1f, t0=%.2f -> t1=%.2f\n", m, t0, t0 + T);
  std::printf("%6s  %12s\n", "n", "rel_l1_err");

  double prev = 0.0;
  for (int n : {64, 128}) {
    const Grid g(2, 2.0, n);
    ScalarField u0(g);
    u0.fill([&](const double* x) { return barenblatt(x, t0, m, 2, mass_total); });

    SimParams p;
    p.m = m;
    p.sigma = p.eps_k = p.eps_p = 0.0;
    p.t_end = T;
    SolverOptions opt;
    opt.chi_on = false;

    Solver solver(g, p, SystemKind::Degenerate, opt);
    const Trajectory tr = solver.solve(u0, {0.0, T});
    if (tr.status != SolveStatus::Completed) {
      std::printf("solve did not complete\n");
      return 1;
    }

    ScalarField exact(g);
    exact.fill([&](const double* x) { return barenblatt(x, t0 + T, m, 2, mass_total); });
    const double err = field_error(tr.snapshots.back(), exact, 1) / lq_norm(exact, 1);
    std::printf("%6d  %12.4e\n", n, err);
    if (prev > 0.0) std::printf("refinement ratio %.2f\n", prev / err);
    prev = err;
  }
  return 0;
}

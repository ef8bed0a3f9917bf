// Commutator demo: the mollifier-commutator estimate says
//   || V_eps * (f g) - (V_eps * f) g ||_q  <=  C eps ||grad g||_inf ||f||_q
// with C independent of eps.  Print the measured ratio (lhs divided by
// eps ||grad g||_inf ||f||_q) for a smooth pair (f, g) while eps shrinks;
// boundedness of the column is the content of the estimate.
#include <cmath>
#include <cstdio>

#include "kslab/core.hpp"
#include "kslab/metrics.hpp"

using namespace kslab;

int main() {
  const Grid g(2, 1.0, 256);
  ScalarField f(g), w(g);
  f.fill([](const double* x) {
    return std::exp(-8.0 * (x[0] * x[0] + x[1] * x[1]));
  });
  w.fill([](const double* x) {
    return std::cos(2.0 * x[0]) * std::exp(-2.0 * (x[1] - 0.2) * (x[1] - 0.2));
  });

  std::printf("commutator ratio, d=2 n=%d\n", g.n);
  std::printf("%8s  %10s  %10s\n", "eps", "q=1", "q=2");
  for (double eps : {0.2, 0.1, 0.05, 0.025}) {
    std::printf("%8.3f  %10.4f  %10.4f\n", eps, commutator_ratio(f, w, eps, 1.0),
                commutator_ratio(f, w, eps, 2.0));
  }
  return 0;
}

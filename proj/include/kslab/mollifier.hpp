#pragma once
// The standard mollifier V^eps(x) = eps^{-d} V(x/eps) with the classical bump
//
//     V(x) = c_d * exp(-1/(1-|x|^2))   for |x| < 1,   0 otherwise,
//
// where c_d normalizes the continuum integral to 1.  c_d is computed once per
// dimension by composite-Simpson radial quadrature (deterministic).
//
// Point evaluators here use the continuum normalization; the convolution
// kernels built in convolve.hpp/potentials.hpp renormalize the *sampled*
// table so the discrete mass is exactly 1 on the working grid (that is what
// makes mollification mass-preserving to round-off in the solvers).

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kslab {

// unnormalized radial profile, argument s = |x| (support s < 1)
inline double bump_profile(double s) {
  if (!(std::fabs(s) < 1.0)) return 0.0;
  return std::exp(-1.0 / (1.0 - s * s));
}

// d/ds of bump_profile
inline double bump_profile_deriv(double s) {
  if (!(std::fabs(s) < 1.0)) return 0.0;
  const double d = 1.0 - s * s;
  return bump_profile(s) * (-2.0 * s / (d * d));
}

namespace detail {

// Composite Simpson on [0,1] with 2^14 panels; integrand vanishes to all
// orders at s=1 so this converges far past double precision needs.
template <class F>
inline double simpson01(F&& f) {
  const int n = 1 << 14;
  const double h = 1.0 / n;
  double s = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double sphere_surface(int d) {
  // |S^{d-1}|: 2*pi for d=2, 4*pi for d=3
  return d == 2 ? 2.0 * M_PI : 4.0 * M_PI;
}

} // namespace detail

// normalization constant c_d with int_{R^d} V = 1
inline double bump_normalization(int d) {
  if (d != 2 && d != 3) throw std::domain_error("bump_normalization: d must be 2 or 3");
  static const double c2 = 1.0 / (detail::sphere_surface(2) *
                                  detail::simpson01([](double r) { return bump_profile(r) * r; }));
  static const double c3 = 1.0 / (detail::sphere_surface(3) * detail::simpson01([](double r) {
                             return bump_profile(r) * r * r;
                           }));
  return d == 2 ? c2 : c3;
}

// V^eps(x); exactly 0 for |x| >= eps
inline double mollifier_value(const double* x, int d, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("mollifier_value: need eps > 0");
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
  const double s2 = r2 / (eps * eps);
  if (s2 >= 1.0) return 0.0;
  return bump_normalization(d) / std::pow(eps, d) * std::exp(-1.0 / (1.0 - s2));
}

// radial form, r = |x|
inline double mollifier_value_radial(double r, int d, double eps) {
  const double x[3] = {r, 0.0, 0.0};
  return mollifier_value(x, d, eps);
}

// grad V^eps(x) (zero vector for |x| >= eps, including the origin)
inline void mollifier_gradient(const double* x, int d, double eps, double* out) {
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
  const double r = std::sqrt(r2);
  const double s = r / eps;
  if (s >= 1.0 || r == 0.0) {
    for (int a = 0; a < d; ++a) out[a] = 0.0;
    return;
  }
  const double dVdr = bump_normalization(d) / std::pow(eps, d) * bump_profile_deriv(s) / eps;
  for (int a = 0; a < d; ++a) out[a] = dVdr * x[a] / r;
}

// Fraction of the mollifier's mass inside radius r (dimensionless in s=r/eps):
// Q(s) = int_{|y|<s} V, with Q(1) = 1 exactly (table renormalized).  Used for
// the Gauss-law evaluation of grad Phi^{eps_k}.
class BumpEnclosedMass {
public:
  explicit BumpEnclosedMass(int d, int samples = 4096) : d_(d), q_(samples + 1, 0.0) {
    if (d != 2 && d != 3) throw std::domain_error("BumpEnclosedMass: d must be 2 or 3");
    const double ds = 1.0 / samples;
    auto integrand = [&](double s) {
      return bump_profile(s) * (d_ == 2 ? s : s * s);
    };
    // cumulative trapezoid, then renormalize so Q(1) = 1 exactly
    for (int i = 1; i <= samples; ++i) {
      const double a = (i - 1) * ds, b = i * ds;
      q_[i] = q_[i - 1] + 0.5 * (integrand(a) + integrand(b)) * ds;
    }
    const double total = q_[samples];
    for (double& v : q_) v /= total;
    q_[samples] = 1.0;
  }

  // s = r/eps; clamped to [0,1]
  double operator()(double s) const {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double u = s * (q_.size() - 1);
    const int i = static_cast<int>(u);
    const double f = u - i;
    return q_[i] * (1.0 - f) + q_[i + 1] * f;
  }

private:
  int d_;
  std::vector<double> q_;
};

// per-axis second moment of V^eps is moment2 * eps^2 (same for every axis);
// handy for commutator expansions in tests
inline double bump_second_moment(int d) {
  const double cd = bump_normalization(d);
  if (d == 2) {
    // int V(y) y_1^2 dy = c_2 * pi * int_0^1 b(r) r^3 dr  (angle average 1/2)
    return cd * M_PI * detail::simpson01([](double r) { return bump_profile(r) * r * r * r; });
  }
  // d=3: angle average of y_1^2 over the sphere is r^2/3
  return cd * (4.0 * M_PI / 3.0) *
         detail::simpson01([](double r) { return bump_profile(r) * r * r * r * r; });
}

} // namespace kslab

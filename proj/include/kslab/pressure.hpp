#pragma once
// Pressure law p(r) = m/(m-1) r^{m-1} and its C^3 cutoff p_lambda:
//
//   p_lambda(r) = p(lambda)   for 0 <= r < lambda,
//               = blend_lo(r) for lambda   <= r < 2*lambda,
//               = p(r)        for 2*lambda <= r <= 1/lambda   (identity band),
//               = blend_hi(r) for 1/lambda <  r < 2/lambda,
//               = p(2/lambda) for r >= 2/lambda.
//
// The two gap blends are degree-7 Hermite polynomials matching value and the
// first three derivatives of the adjoining pieces at both ends (plateau side:
// derivatives 0).  Construction runs a monotonicity audit over both blend
// intervals and rejects the law if a blend decreases beyond floating-point
// noise.  The identity band evaluates through exactly the same code path as
// p_eval, so p_lambda == p there bit-for-bit.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace kslab {

inline double p_eval(double r, double m) {
  if (!(m > 1.0)) throw std::domain_error("p_eval: need m > 1");
  if (r < 0.0) throw std::domain_error("p_eval: need r >= 0");
  return m / (m - 1.0) * std::pow(r, m - 1.0);
}

// p'(r) = m r^{m-2}; for m < 2 this diverges at r = 0 (returns +inf there).
inline double p_prime(double r, double m) {
  if (!(m > 1.0)) throw std::domain_error("p_prime: need m > 1");
  if (r < 0.0) throw std::domain_error("p_prime: need r >= 0");
  return m * std::pow(r, m - 2.0);
}

inline double p_second(double r, double m) { return m * (m - 2.0) * std::pow(r, m - 3.0); }
inline double p_third(double r, double m) {
  return m * (m - 2.0) * (m - 3.0) * std::pow(r, m - 4.0);
}

namespace detail {

// Degree-7 Bernstein coefficients of the two-point Hermite interpolant on
// t in [0,1]: q^{(k)}(0) and q^{(k)}(1) prescribed for k = 0..3.  `fa`/`fb`
// hold derivatives with respect to r; `w` is the interval width, so the
// t-derivatives are fa[k] * w^k.  Endpoint differences of Bernstein
// coefficients encode the derivatives, q^{(k)}(0) = 7!/(7-k)! * delta^k b_0,
// which inverts in closed form.  The Bernstein form keeps every coefficient
// on the scale of the data, so de Casteljau evaluation avoids the
// cancellation a monomial/Horner representation suffers near the junctions.
inline std::array<double, 8> bernstein_hermite7(const std::array<double, 4>& fa,
                                                const std::array<double, 4>& fb, double w) {
  const double g1a = fa[1] * w, g2a = fa[2] * w * w, g3a = fa[3] * w * w * w;
  const double g1b = fb[1] * w, g2b = fb[2] * w * w, g3b = fb[3] * w * w * w;
  std::array<double, 8> b{};
  b[0] = fa[0];
  b[1] = b[0] + g1a / 7.0;
  b[2] = 2.0 * b[1] - b[0] + g2a / 42.0;
  b[3] = 3.0 * b[2] - 3.0 * b[1] + b[0] + g3a / 210.0;
  b[7] = fb[0];
  b[6] = b[7] - g1b / 7.0;
  b[5] = 2.0 * b[6] - b[7] + g2b / 42.0;
  b[4] = b[7] - 3.0 * b[6] + 3.0 * b[5] - g3b / 210.0;
  return b;
}

// de Casteljau evaluation (convex combinations only, backward stable)
inline double bezier_eval(const std::array<double, 8>& b, double t) {
  std::array<double, 8> wk = b;
  const double s = 1.0 - t;
  for (int lvl = 7; lvl >= 1; --lvl)
    for (int i = 0; i < lvl; ++i) wk[i] = s * wk[i] + t * wk[i + 1];
  return wk[0];
}

// d/dt of the Bernstein polynomial: degree-6 de Casteljau over differences
inline double bezier_deriv(const std::array<double, 8>& b, double t) {
  std::array<double, 7> d;
  for (int i = 0; i < 7; ++i) d[i] = 7.0 * (b[i + 1] - b[i]);
  const double s = 1.0 - t;
  for (int lvl = 6; lvl >= 1; --lvl)
    for (int i = 0; i < lvl; ++i) d[i] = s * d[i] + t * d[i + 1];
  return d[0];
}

} // namespace detail

class PressureLaw {
public:
  // lambda == 0 disables the cutoff: the law is plain p.
  PressureLaw(double m, double lambda) : m_(m), lambda_(lambda) {
    if (!(m > 1.0)) throw std::domain_error("PressureLaw: need m > 1");
    if (lambda < 0.0) throw std::domain_error("PressureLaw: need lambda >= 0");
    if (lambda == 0.0) return;
    if (!(2.0 * lambda < 1.0 / lambda))
      throw std::domain_error("PressureLaw: identity band empty, need lambda < 1/sqrt(2)");

    p_lo_ = p_eval(lambda, m);
    p_hi_ = p_eval(2.0 / lambda, m);

    lo_a_ = lambda;
    lo_w_ = lambda; // [lambda, 2 lambda]
    const std::array<double, 4> fa_lo = {p_lo_, 0.0, 0.0, 0.0};
    const std::array<double, 4> fb_lo = {p_eval(2.0 * lambda, m), p_prime(2.0 * lambda, m),
                                         p_second(2.0 * lambda, m), p_third(2.0 * lambda, m)};
    lo_ = detail::bernstein_hermite7(fa_lo, fb_lo, lo_w_);

    hi_a_ = 1.0 / lambda;
    hi_w_ = 1.0 / lambda; // [1/lambda, 2/lambda]
    const std::array<double, 4> fa_hi = {p_eval(1.0 / lambda, m), p_prime(1.0 / lambda, m),
                                         p_second(1.0 / lambda, m), p_third(1.0 / lambda, m)};
    const std::array<double, 4> fb_hi = {p_hi_, 0.0, 0.0, 0.0};
    hi_ = detail::bernstein_hermite7(fa_hi, fb_hi, hi_w_);

    audit_monotone();
  }

  double m() const { return m_; }
  double lambda() const { return lambda_; }

  // p_lambda(r)
  double operator()(double r) const {
    if (r < 0.0) throw std::domain_error("p_lambda: need r >= 0");
    if (lambda_ == 0.0) return p_eval(r, m_);
    if (r < lambda_) return p_lo_;
    if (r < 2.0 * lambda_) return detail::bezier_eval(lo_, (r - lo_a_) / lo_w_);
    if (r <= 1.0 / lambda_) return p_eval(r, m_); // identity band, same code path as p
    if (r < 2.0 / lambda_) return detail::bezier_eval(hi_, (r - hi_a_) / hi_w_);
    return p_hi_;
  }

  // analytic derivative of p_lambda (identically 0 on the two plateaus)
  double prime(double r) const {
    if (r < 0.0) throw std::domain_error("p_lambda_prime: need r >= 0");
    if (lambda_ == 0.0) return p_prime(r, m_);
    if (r < lambda_) return 0.0;
    if (r < 2.0 * lambda_) return detail::bezier_deriv(lo_, (r - lo_a_) / lo_w_) / lo_w_;
    if (r <= 1.0 / lambda_) return p_prime(r, m_);
    if (r < 2.0 / lambda_) return detail::bezier_deriv(hi_, (r - hi_a_) / hi_w_) / hi_w_;
    return 0.0;
  }

  // upper bound for p_lambda' (used by the CFL diffusivity bound)
  double prime_max() const {
    if (lambda_ == 0.0) return std::numeric_limits<double>::infinity();
    double pmax = 0.0;
    for (int i = 0; i <= 4096; ++i) {
      const double r = (2.0 / lambda_) * i / 4096.0;
      pmax = std::max(pmax, prime(r));
    }
    return pmax;
  }

private:
  // Sample both blends densely; tolerate only decreases attributable to
  // floating-point noise (relative to the value scale of the blend).
  void audit_monotone() const {
    const int ns = 2048;
    for (int blend = 0; blend < 2; ++blend) {
      const auto& c = blend == 0 ? lo_ : hi_;
      const double scale = std::fabs(blend == 0 ? p_eval(2.0 * lambda_, m_) : p_hi_) + 1.0;
      double prev = detail::bezier_eval(c, 0.0);
      for (int i = 1; i <= ns; ++i) {
        const double t = static_cast<double>(i) / ns;
        const double cur = detail::bezier_eval(c, t);
        if (cur < prev - 1e-12 * scale)
          throw std::runtime_error("PressureLaw: non-monotone blend for m=" + std::to_string(m_) +
                                   " lambda=" + std::to_string(lambda_));
        prev = std::max(prev, cur);
      }
    }
  }

  double m_ = 2.0;
  double lambda_ = 0.0;
  double p_lo_ = 0.0, p_hi_ = 0.0;
  double lo_a_ = 0.0, lo_w_ = 1.0, hi_a_ = 0.0, hi_w_ = 1.0;
  std::array<double, 8> lo_{}, hi_{};
};

} // namespace kslab

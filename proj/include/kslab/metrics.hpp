#pragma once
// Norms, error measures, convergence-rate fitting, the Barenblatt oracle, and
// the mollifier commutator ratio.  Everything here is a pure function.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kslab/convolve.hpp"
#include "kslab/core.hpp"
#include "kslab/field_io.hpp"
#include "kslab/mollifier.hpp"
#include "kslab/potentials.hpp"

namespace kslab {

// (sum |f|^q h^d)^{1/q}; q = infinity gives max |f|
inline double lq_norm(const ScalarField& f, double q) {
  if (!(q >= 1.0)) throw std::domain_error("lq_norm: need q >= 1");
  if (std::isinf(q)) {
    double m = 0.0;
    for (double v : f.v) m = std::max(m, std::fabs(v));
    return m;
  }
  double s = 0.0;
  for (double v : f.v) s += std::pow(std::fabs(v), q);
  return std::pow(s * f.grid.cell_volume(), 1.0 / q);
}

inline double field_error(const ScalarField& f, const ScalarField& g, double q) {
  if (!(f.grid == g.grid)) throw std::invalid_argument("field_error: grid mismatch");
  ScalarField d(f.grid);
  for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] = f.v[i] - g.v[i];
  return lq_norm(d, q);
}

// discrete H^1 seminorm: root sum of squared interior face differences / h
inline double h1_seminorm(const ScalarField& f) {
  const Grid& g = f.grid;
  double s = 0.0;
  for (int a = 0; a < g.d; ++a) {
    const std::size_t st = g.stride(a);
    // iterate over faces between index i and i+1 along axis a
    if (g.d == 2) {
      for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
          const int ia = a == 0 ? i : j;
          if (ia >= g.n - 1) continue;
          const std::size_t q = g.idx(i, j);
          const double du = (f.v[q + st] - f.v[q]) / g.h;
          s += du * du;
        }
    } else {
      for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
          for (int k = 0; k < g.n; ++k) {
            const int ia = a == 0 ? i : (a == 1 ? j : k);
            if (ia >= g.n - 1) continue;
            const std::size_t q = g.idx(i, j, k);
            const double du = (f.v[q + st] - f.v[q]) / g.h;
            s += du * du;
          }
    }
  }
  return std::sqrt(s * g.cell_volume());
}

// space-time norm (sum_k dt_k sum_x |u_k|^q h^d)^{1/q} over snapshot times,
// left-endpoint rule on each interval [t_k, t_{k+1}]
inline double spacetime_lq(const std::vector<ScalarField>& snaps, const std::vector<double>& times,
                           double q) {
  if (snaps.size() != times.size() || snaps.size() < 2)
    throw std::invalid_argument("spacetime_lq: need >= 2 matching snapshots and times");
  if (!(q >= 1.0) || std::isinf(q)) throw std::domain_error("spacetime_lq: need finite q >= 1");
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < snaps.size(); ++k) {
    const double dt = times[k + 1] - times[k];
    if (!(dt > 0.0)) throw std::invalid_argument("spacetime_lq: times must increase");
    const double nq = lq_norm(snaps[k], q);
    acc += dt * std::pow(nq, q);
  }
  return std::pow(acc, 1.0 / q);
}

// ---------------------------------------------------------------------------
// convergence-rate fitting

struct RateFit {
  std::vector<std::pair<double, double>> points; // (parameter, error)
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0; // RMS residual of the log-log least-squares line
};

inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_rate: need >= 3 points");
  for (const auto& [p, e] : points)
    if (!(p > 0.0) || !(e > 0.0))
      throw std::domain_error("fit_rate: parameters and errors must be positive");
  const double n = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [p, e] : points) {
    const double x = std::log(p), y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  if (det == 0.0) throw std::domain_error("fit_rate: degenerate abscissae");
  RateFit out;
  out.points = points;
  out.slope = (n * sxy - sx * sy) / det;
  out.intercept = (sy * sxx - sx * sxy) / det;
  double rss = 0.0;
  for (const auto& [p, e] : points) {
    const double r = std::log(e) - (out.slope * std::log(p) + out.intercept);
    rss += r * r;
  }
  out.residual = std::sqrt(rss / n);
  return out;
}

// CSV row used by the experiment reports
inline std::string rate_fit_csv_row(const std::string& name, const RateFit& fit) {
  return name + "," + format_g17(fit.slope) + "," + format_g17(fit.intercept) + "," +
         format_g17(fit.residual);
}

// ---------------------------------------------------------------------------
// Barenblatt profile (porous-medium self-similar solution)
//
//   u(t,x) = t^{-alpha} ( C_M - kappa |x|^2 t^{-2 beta} )_+^{1/(m-1)}
//   alpha = d / (d(m-1) + 2),  beta = alpha / d,  kappa = alpha (m-1) / (2 m d)
//
// C_M in closed form from the total mass M:
//   M = C_M^{q + d/2} kappa^{-d/2} pi^{d/2} Gamma(q+1) / Gamma(q+1+d/2),
//   q = 1/(m-1).

inline double barenblatt_cm(double m, int d, double M) {
  const double q = 1.0 / (m - 1.0);
  const double alpha = d / (d * (m - 1.0) + 2.0);
  const double kappa = alpha * (m - 1.0) / (2.0 * m * d);
  const double lg = std::lgamma(q + 1.0 + 0.5 * d) - std::lgamma(q + 1.0);
  const double ratio = std::exp(lg); // Gamma(q+1+d/2)/Gamma(q+1)
  return std::pow(M * std::pow(kappa, 0.5 * d) * ratio / std::pow(M_PI, 0.5 * d),
                  1.0 / (q + 0.5 * d));
}

inline double barenblatt(const double* x, double t, double m, int d, double M) {
  if (!(t > 0.0)) throw std::domain_error("barenblatt: need t > 0");
  if (!(m > 1.0)) throw std::domain_error("barenblatt: need m > 1");
  const double alpha = d / (d * (m - 1.0) + 2.0);
  const double beta = alpha / d;
  const double kappa = alpha * (m - 1.0) / (2.0 * m * d);
  const double cm = barenblatt_cm(m, d, M);
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
  const double bracket = cm - kappa * r2 * std::pow(t, -2.0 * beta);
  if (bracket <= 0.0) return 0.0;
  return std::pow(t, -alpha) * std::pow(bracket, 1.0 / (m - 1.0));
}

// radius of the support disc at time t: bracket root
inline double barenblatt_support_radius(double t, double m, int d, double M) {
  if (!(t > 0.0)) throw std::domain_error("barenblatt_support_radius: need t > 0");
  const double alpha = d / (d * (m - 1.0) + 2.0);
  const double beta = alpha / d;
  const double kappa = alpha * (m - 1.0) / (2.0 * m * d);
  return std::sqrt(barenblatt_cm(m, d, M) / kappa) * std::pow(t, beta);
}

// ---------------------------------------------------------------------------
// Lemma-style commutator: V^eps * (f g) - (V^eps * f) g

// max over cells and components of centered (one-sided at the boundary)
// difference quotients of g
inline double grad_linf(const ScalarField& g) {
  const Grid& gr = g.grid;
  double m = 0.0;
  for (int a = 0; a < gr.d; ++a) {
    const std::size_t st = gr.stride(a);
    const std::size_t total = gr.size();
    for (std::size_t q = 0; q < total; ++q) {
      // recover the index along axis a
      std::size_t rem = q;
      int ia = 0;
      if (gr.d == 2) {
        ia = a == 0 ? static_cast<int>(rem / gr.n) : static_cast<int>(rem % gr.n);
      } else {
        const std::size_t n2 = static_cast<std::size_t>(gr.n) * gr.n;
        if (a == 0)
          ia = static_cast<int>(rem / n2);
        else if (a == 1)
          ia = static_cast<int>((rem / gr.n) % gr.n);
        else
          ia = static_cast<int>(rem % gr.n);
      }
      double dq;
      if (ia == 0)
        dq = (g.v[q + st] - g.v[q]) / gr.h;
      else if (ia == gr.n - 1)
        dq = (g.v[q] - g.v[q - st]) / gr.h;
      else
        dq = (g.v[q + st] - g.v[q - st]) / (2.0 * gr.h);
      m = std::max(m, std::fabs(dq));
    }
  }
  return m;
}

inline ScalarField commutator_numerator(const ScalarField& f, const ScalarField& g, double eps) {
  if (!(f.grid == g.grid)) throw std::invalid_argument("commutator_numerator: grid mismatch");
  const KernelSpectrum K = mollifier_kernel_spectrum(f.grid, eps);
  ScalarField fg(f.grid);
  for (std::size_t i = 0; i < fg.v.size(); ++i) fg.v[i] = f.v[i] * g.v[i];
  ScalarField a = convolve_free_space(fg, K);
  ScalarField b = convolve_free_space(f, K);
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] -= b.v[i] * g.v[i];
  return a;
}

inline double commutator_ratio(const ScalarField& f, const ScalarField& g, double eps, double q) {
  const double gg = grad_linf(g);
  const double fn = lq_norm(f, q);
  if (gg == 0.0 || fn == 0.0)
    throw std::domain_error("commutator_ratio: undefined (grad g or f vanishes)");
  return lq_norm(commutator_numerator(f, g, eps), q) / (eps * gg * fn);
}

} // namespace kslab

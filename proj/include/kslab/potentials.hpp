#pragma once
// Newtonian potential Phi with the -ΔPhi = δ convention,
//
//     Phi(x) = -(1/2pi) log|x|   (d=2),      Phi(x) = 1/(4pi |x|)   (d=3),
//
// its mollification Phi^{eps_k} = Phi * V^{eps_k}, and the free-space Poisson
// solve -Δc = u realized as c = Phi * u, grad c = (grad Phi) * u.
//
// grad Phi^{eps_k} is evaluated radially through Gauss's law: with Q(r) the
// mollifier mass enclosed in radius r,
//
//     grad Phi^{eps_k}(x) = -x/r * Q(r) / (S_{d-1} r^{d-1}),
//
// which equals grad Phi exactly for r >= eps_k (Q = 1 there).  This is also
// what the particle code uses, so PDE and particle representations of the
// aggregation kernel agree by construction.
//
// Kernel tables sample the analytic functions at cell offsets; the origin
// cell of the Phi table takes the exact cell average of Phi over one cell
// (closed form for d=2, quadrature + Richardson constant for d=3), which
// keeps the discrete Newtonian convolution second-order consistent.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kslab/convolve.hpp"
#include "kslab/core.hpp"
#include "kslab/mollifier.hpp"

namespace kslab {

inline double newtonian_potential(const double* x, int d) {
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
  if (r2 == 0.0) throw std::domain_error("newtonian_potential: singular at x = 0");
  if (d == 2) return -std::log(r2) / (4.0 * M_PI); // -(1/2pi) log r
  if (d == 3) return 1.0 / (4.0 * M_PI * std::sqrt(r2));
  throw std::domain_error("newtonian_potential: d must be 2 or 3");
}

// grad Phi(x) = -x / (S_{d-1} |x|^d)
inline void newtonian_gradient(const double* x, int d, double* out) {
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
  if (r2 == 0.0) throw std::domain_error("newtonian_gradient: singular at x = 0");
  const double s = d == 2 ? 1.0 / (2.0 * M_PI * r2) : 1.0 / (4.0 * M_PI * r2 * std::sqrt(r2));
  for (int a = 0; a < d; ++a) out[a] = -x[a] * s;
}

namespace detail {

// average of log|x| over the centered unit square:
//   int_{[-1/2,1/2]^2} log|x| dx = pi/4 - 3/2 - (log 2)/2
inline double log_r_cell_average_2d() { return M_PI / 4.0 - 1.5 - 0.5 * std::log(2.0); }

// average of 1/|x| over the centered unit cube, by midpoint quadrature at two
// resolutions with Richardson extrapolation (deterministic, computed once)
inline double inv_r_cell_average_3d() {
  static const double value = [] {
    auto mid = [](int nq) {
      double s = 0.0;
      for (int i = 0; i < nq; ++i) {
        const double x = (i + 0.5) / nq - 0.5;
        for (int j = 0; j < nq; ++j) {
          const double y = (j + 0.5) / nq - 0.5;
          for (int k = 0; k < nq; ++k) {
            const double z = (k + 0.5) / nq - 0.5;
            s += 1.0 / std::sqrt(x * x + y * y + z * z);
          }
        }
      }
      return s / (static_cast<double>(nq) * nq * nq);
    };
    const double v1 = mid(128), v2 = mid(256);
    return v2 + (v2 - v1) / 3.0;
  }();
  return value;
}

} // namespace detail

// exact cell average of Phi over one grid cell centered at the origin
inline double phi_origin_cell_average(int d, double h) {
  if (d == 2) return -(std::log(h) + detail::log_r_cell_average_2d()) / (2.0 * M_PI);
  if (d == 3) return detail::inv_r_cell_average_3d() / (4.0 * M_PI * h);
  throw std::domain_error("phi_origin_cell_average: d must be 2 or 3");
}

// Radial evaluator for grad Phi^{eps} via Gauss's law.  radial(r) returns the
// magnitude factor g(r) with grad Phi^{eps}(x) = -(x/r) * g(r); inside the
// mollifier support g comes from a dense enclosed-mass table, outside it is
// exactly the Newtonian 1/(S_{d-1} r^{d-1}).
class MollifiedPotentialGradient {
public:
  MollifiedPotentialGradient(int d, double eps) : d_(d), eps_(eps), mass_(d) {
    if (!(eps > 0.0)) throw std::domain_error("MollifiedPotentialGradient: need eps > 0");
  }

  int dim() const { return d_; }
  double eps() const { return eps_; }

  double radial(double r) const {
    if (r <= 0.0) return 0.0;
    const double surf = d_ == 2 ? 2.0 * M_PI * r : 4.0 * M_PI * r * r;
    if (r >= eps_) return 1.0 / surf;
    return mass_(r / eps_) / surf;
  }

  void eval(const double* x, double* out) const {
    double r2 = 0.0;
    for (int a = 0; a < d_; ++a) r2 += x[a] * x[a];
    const double r = std::sqrt(r2);
    if (r == 0.0) {
      for (int a = 0; a < d_; ++a) out[a] = 0.0;
      return;
    }
    const double g = radial(r);
    for (int a = 0; a < d_; ++a) out[a] = -x[a] / r * g;
  }

private:
  int d_;
  double eps_;
  BumpEnclosedMass mass_;
};

// Tabulates grad Phi^{eps_k} at the node offsets o_i = (i - n/2) h of the
// grid (the offset lattice where x = 0 exists; cell centers do not contain
// the origin).  Component a is odd under x -> -x and the origin entry is the
// exact zero vector.
inline VectorField mollified_potential_gradient_table(double eps_k, const Grid& g) {
  if (g.h > eps_k / 4.0 * (1.0 + 1e-12))
    throw std::invalid_argument("mollified_potential_gradient_table: need h <= eps_k/4");
  MollifiedPotentialGradient gp(g.d, eps_k);
  VectorField out(g);
  const int n = g.n;
  double x[3] = {0, 0, 0};
  double v[3] = {0, 0, 0};
  auto node = [&](int i) { return (i - n / 2) * g.h; };
  if (g.d == 2) {
    std::size_t q = 0;
    for (int i = 0; i < n; ++i) {
      x[0] = node(i);
      for (int j = 0; j < n; ++j, ++q) {
        x[1] = node(j);
        gp.eval(x, v);
        out.comp[0][q] = v[0];
        out.comp[1][q] = v[1];
      }
    }
  } else {
    std::size_t q = 0;
    for (int i = 0; i < n; ++i) {
      x[0] = node(i);
      for (int j = 0; j < n; ++j) {
        x[1] = node(j);
        for (int k = 0; k < n; ++k, ++q) {
          x[2] = node(k);
          gp.eval(x, v);
          out.comp[0][q] = v[0];
          out.comp[1][q] = v[1];
          out.comp[2][q] = v[2];
        }
      }
    }
  }
  return out;
}

// ---- kernel spectra for the convolution path ----

// V^eps sampled at cell offsets, discrete mass renormalized to exactly 1
inline KernelSpectrum mollifier_kernel_spectrum(const Grid& g, double eps) {
  return make_kernel_spectrum(
      g, [&](const double* x) { return mollifier_value(x, g.d, eps); }, /*renormalize=*/true);
}

// components of grad V^eps (odd; no renormalization)
inline std::array<KernelSpectrum, 3> mollifier_gradient_spectra(const Grid& g, double eps) {
  std::array<KernelSpectrum, 3> out;
  for (int a = 0; a < g.d; ++a) {
    out[a] = make_kernel_spectrum(
        g,
        [&](const double* x) {
          double grad[3];
          mollifier_gradient(x, g.d, eps, grad);
          return grad[a];
        },
        /*renormalize=*/false);
  }
  return out;
}

// Phi sampled at cell offsets with the origin cell average
inline KernelSpectrum phi_kernel_spectrum(const Grid& g) {
  return make_kernel_spectrum(
      g,
      [&](const double* x) {
        double r2 = 0.0;
        for (int a = 0; a < g.d; ++a) r2 += x[a] * x[a];
        if (r2 == 0.0) return phi_origin_cell_average(g.d, g.h);
        return newtonian_potential(x, g.d);
      },
      /*renormalize=*/false);
}

// components of grad Phi (odd, origin entry 0)
inline std::array<KernelSpectrum, 3> grad_phi_kernel_spectra(const Grid& g) {
  std::array<KernelSpectrum, 3> out;
  for (int a = 0; a < g.d; ++a) {
    out[a] = make_kernel_spectrum(
        g,
        [&](const double* x) {
          double r2 = 0.0;
          for (int b = 0; b < g.d; ++b) r2 += x[b] * x[b];
          if (r2 == 0.0) return 0.0;
          double grad[3];
          newtonian_gradient(x, g.d, grad);
          return grad[a];
        },
        /*renormalize=*/false);
  }
  return out;
}

// components of grad Phi^{eps_k} (odd, origin entry 0, exact grad Phi outside
// the mollifier support)
inline std::array<KernelSpectrum, 3> grad_phi_mollified_spectra(const Grid& g, double eps_k) {
  MollifiedPotentialGradient gp(g.d, eps_k);
  std::array<KernelSpectrum, 3> out;
  for (int a = 0; a < g.d; ++a) {
    out[a] = make_kernel_spectrum(
        g,
        [&](const double* x) {
          double v[3];
          gp.eval(x, v);
          return v[a];
        },
        /*renormalize=*/false);
  }
  return out;
}

struct PoissonResult {
  ScalarField c;       // c = Phi * u
  VectorField grad_c;  // (grad Phi) * u  (NOT finite differences of c)
};

// Free-space Poisson solve -Δc = u.  Builds the kernel spectra for u's grid
// on each call; long-running solvers cache their spectra instead.
inline PoissonResult solve_poisson(const ScalarField& u) {
  const Grid& g = u.grid;
  PoissonResult out{ScalarField(g), VectorField(g)};
  const FieldSpectrum fs = forward_field(u);
  out.c = convolve_spectrum(fs, phi_kernel_spectrum(g), g);
  const auto grads = grad_phi_kernel_spectra(g);
  for (int a = 0; a < g.d; ++a) {
    ScalarField comp = convolve_spectrum(fs, grads[a], g);
    out.grad_c.comp[a] = std::move(comp.v);
  }
  return out;
}

} // namespace kslab

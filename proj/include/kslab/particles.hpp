#pragma once
// N-particle approximation of the non-local system.  Each particle carries
// mass 1/N and follows
//
//   dX_i = [ chi (grad Phi^{eps_k} * mu^N)(X_i)
//            - p_lam'(rho_i) (grad V^{eps_p} * mu^N)(X_i) ] dt
//          + sqrt(2 sigma) dB_i,
//   rho_i = (V^{eps_p} * mu^N)(X_i)    (self term V^{eps_p}(0)/N included),
//
// with mu^N the empirical measure of the ensemble.  Drifts are direct sums:
//   * the aggregation kernel splits into the exact Newtonian gradient over
//     all pairs (evaluated once per pair, applied with both signs -- the
//     kernel is odd) plus a correction grad Phi^{eps_k} - grad Phi supported
//     in |x| < eps_k, gathered through a cell list;
//   * the eps_p-local sums for rho and grad V^{eps_p} ride the same list.
// Coincident particles (r = 0) contribute nothing to any gradient sum (the
// mollified gradients vanish at the origin and the Newtonian part is skipped
// in both the far sum and its correction, which keeps the two passes
// consistent) but still see each other through the even kernel V^{eps_p}.
//
// Randomness is counter-based: one deterministic 64-bit word per
// (seed, stream, counter), so trajectories are bitwise reproducible for a
// fixed seed no matter how calls are batched.
//
// McKean-Vlasov dynamics reuse the same Euler-Maruyama update with the
// interaction drift replaced by fields frozen from a PDE trajectory
// (piecewise-constant in time, multilinear in space).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kslab/convolve.hpp"
#include "kslab/core.hpp"
#include "kslab/mollifier.hpp"
#include "kslab/potentials.hpp"
#include "kslab/pressure.hpp"

namespace kslab {

// ---------------------------------------------------------------------------
// counter-based randomness

class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ull))) {}

  // uniform draw in (0, 1] -- never 0, so logarithms are always finite
  double uniform(std::uint64_t k) const {
    return static_cast<double>((word(k) >> 11) + 1) * 0x1.0p-53;
  }

  // standard normal via Box-Muller (cosine branch); consumes words 2k, 2k+1
  double normal(std::uint64_t k) const {
    const double u1 = uniform(2 * k);
    const double u2 = uniform(2 * k + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t word(std::uint64_t k) const {
    return mix(base_ + k * 0x9e3779b97f4a7c15ull);
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  std::uint64_t base_;
};

// ---------------------------------------------------------------------------
// ensembles

struct ParticleEnsemble {
  int d = 2;
  std::vector<double> x; // size N*d, particle-major layout

  ParticleEnsemble() = default;
  ParticleEnsemble(int d_, std::size_t n) : d(d_), x(n * d_, 0.0) {
    if (d != 2 && d != 3) throw std::invalid_argument("ParticleEnsemble: d must be 2 or 3");
  }

  std::size_t size() const { return d > 0 ? x.size() / d : 0; }
  double* pos(std::size_t i) { return x.data() + i * d; }
  const double* pos(std::size_t i) const { return x.data() + i * d; }
};

// Rejection-samples n particles from the probability density proportional to
// the (piecewise-constant) field f >= 0.  Deterministic for a fixed rng.
inline ParticleEnsemble sample_initial(const ScalarField& f, std::size_t n,
                                       const CounterRng& rng) {
  const Grid& g = f.grid;
  double fmax = 0.0;
  for (double v : f.v) {
    if (v < 0.0) throw std::domain_error("sample_initial: density must be nonnegative");
    fmax = std::max(fmax, v);
  }
  if (!(fmax > 0.0)) throw std::domain_error("sample_initial: density has no mass");

  // bounding box of the positive cells (whole cells, edge to edge)
  int lo[3] = {g.n, g.n, g.n}, hi[3] = {-1, -1, -1};
  const int nn = g.n;
  for (std::size_t q = 0; q < f.v.size(); ++q) {
    if (!(f.v[q] > 0.0)) continue;
    std::size_t r = q;
    for (int a = g.d - 1; a >= 0; --a) {
      const int ia = static_cast<int>(r % nn);
      r /= nn;
      lo[a] = std::min(lo[a], ia);
      hi[a] = std::max(hi[a], ia);
    }
  }
  double box_lo[3], box_span[3];
  for (int a = 0; a < g.d; ++a) {
    box_lo[a] = g.coord(lo[a]) - 0.5 * g.h;
    box_span[a] = (g.coord(hi[a]) + 0.5 * g.h) - box_lo[a];
  }

  ParticleEnsemble ens(g.d, n);
  std::uint64_t attempt = 0;
  const std::uint64_t max_attempts = 10000 * static_cast<std::uint64_t>(n) + 10000;
  for (std::size_t i = 0; i < n; ++i) {
    for (;;) {
      if (attempt >= max_attempts)
        throw std::runtime_error("sample_initial: rejection sampling stalled");
      const std::uint64_t k = attempt * (g.d + 1);
      ++attempt;
      double xp[3] = {0, 0, 0};
      int idx[3] = {0, 0, 0};
      for (int a = 0; a < g.d; ++a) {
        xp[a] = box_lo[a] + box_span[a] * rng.uniform(k + a);
        idx[a] = std::min(nn - 1, std::max(0, static_cast<int>(std::floor(
                                               (xp[a] + g.half_width) / g.h))));
      }
      const double fv = g.d == 2 ? f.v[g.idx(idx[0], idx[1])] : f.v[g.idx(idx[0], idx[1], idx[2])];
      if (rng.uniform(k + g.d) * fmax <= fv) {
        for (int a = 0; a < g.d; ++a) ens.pos(i)[a] = xp[a];
        break;
      }
    }
  }
  return ens;
}

// ---------------------------------------------------------------------------
// interaction drift

struct ParticleDrift {
  std::vector<double> b;     // N*d: total drift
  std::vector<double> b_agg; // N*d: chi * (grad Phi^{eps_k} * mu^N)(X_i)
  std::vector<double> rho;   // N: mollified density at the particles
};

namespace detail {

// flat cell list over the ensemble's bounding box; cell size >= hc so every
// pair closer than hc sits in adjacent cells.  The cell count is capped (a
// coarser grid only adds candidates; each pair is still distance-checked).
struct CellList {
  int d = 2;
  double x0[3] = {0, 0, 0};
  int nc[3] = {1, 1, 1};
  double hc = 1.0;
  std::vector<int> start; // CSR offsets into `order`, size ncells+1
  std::vector<int> order; // particle ids grouped by cell

  CellList(const ParticleEnsemble& ens, double hc_min) : d(ens.d) {
    const std::size_t n = ens.size();
    double x1[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) {
      x0[a] = std::numeric_limits<double>::infinity();
      x1[a] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) {
        x0[a] = std::min(x0[a], ens.pos(i)[a]);
        x1[a] = std::max(x1[a], ens.pos(i)[a]);
      }
    double span = 0.0;
    for (int a = 0; a < d; ++a) span = std::max(span, x1[a] - x0[a]);
    hc = hc_min;
    // cap total cells at ~4N so degenerate geometries cannot blow up memory
    const double cells_cap = std::cbrt(4.0 * static_cast<double>(n) + 64.0);
    if (span / hc > cells_cap) hc = span / cells_cap;
    std::size_t ncells = 1;
    for (int a = 0; a < d; ++a) {
      nc[a] = std::max(1, static_cast<int>(std::floor((x1[a] - x0[a]) / hc)) + 1);
      ncells *= static_cast<std::size_t>(nc[a]);
    }
    start.assign(ncells + 1, 0);
    order.resize(n);
    std::vector<int> cell_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      cell_of[i] = cell_index(ens.pos(i));
      ++start[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < start.size(); ++c) start[c] += start[c - 1];
    std::vector<int> cursor(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) order[cursor[cell_of[i]]++] = static_cast<int>(i);
  }

  int axis_cell(double x, int a) const {
    const int c = static_cast<int>(std::floor((x - x0[a]) / hc));
    return std::min(nc[a] - 1, std::max(0, c));
  }
  int cell_index(const double* x) const {
    int c = axis_cell(x[0], 0);
    for (int a = 1; a < d; ++a) c = c * nc[a] + axis_cell(x[a], a);
    return c;
  }
};

inline double surface_at(int d, double r) {
  return d == 2 ? 2.0 * M_PI * r : 4.0 * M_PI * r * r;
}

} // namespace detail

inline ParticleDrift pair_drift(const ParticleEnsemble& ens, const SimParams& p) {
  const int d = ens.d;
  if (d != p.d) throw std::invalid_argument("pair_drift: ensemble dimension differs from params");
  if (!(p.eps_k > 0.0) || !(p.eps_p > 0.0))
    throw std::invalid_argument("pair_drift: need eps_k > 0 and eps_p > 0");
  const std::size_t n = ens.size();
  if (n == 0) throw std::invalid_argument("pair_drift: empty ensemble");
  const PressureLaw plam(p.m, p.lambda);
  const BumpEnclosedMass encl(d);
  const double cd = bump_normalization(d);
  const double inv_n = 1.0 / static_cast<double>(n);

  ParticleDrift out;
  out.b.assign(n * d, 0.0);
  out.b_agg.assign(n * d, 0.0);
  const double v0 = mollifier_value_radial(0.0, d, p.eps_p);
  out.rho.assign(n, v0); // self term, scaled later

  // far pass: exact Newtonian gradient, all pairs, antisymmetric
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = ens.pos(i);
    double* bi = &out.b_agg[i * d];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = ens.pos(j);
      double dx[3] = {0, 0, 0};
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        dx[a] = xi[a] - xj[a];
        r2 += dx[a] * dx[a];
      }
      if (r2 == 0.0) continue;
      double coef;
      if (d == 2) {
        coef = -1.0 / (2.0 * M_PI * r2);
      } else {
        const double r = std::sqrt(r2);
        coef = -1.0 / (4.0 * M_PI * r2 * r);
      }
      double* bj = &out.b_agg[j * d];
      for (int a = 0; a < d; ++a) {
        const double ga = coef * dx[a];
        bi[a] += ga;
        bj[a] -= ga;
      }
    }
  }

  // near pass: mollification correction for grad Phi plus the eps_p sums
  std::vector<double> gv(n * d, 0.0); // (grad V^{eps_p} * mu^N)(X_i), unscaled
  const double reach = std::max(p.eps_k, p.eps_p);
  detail::CellList cl(ens, reach);
  int window[3] = {1, 1, 1}; // +-1 cells unless the cap coarsened hc below reach
  for (int a = 0; a < d; ++a)
    window[a] = std::max(1, static_cast<int>(std::ceil(reach / cl.hc)));
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = ens.pos(i);
    int ci[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) ci[a] = cl.axis_cell(xi[a], a);
    int clo[3] = {0, 0, 0}, chi_[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) {
      clo[a] = std::max(0, ci[a] - window[a]);
      chi_[a] = std::min(cl.nc[a] - 1, ci[a] + window[a]);
    }
    const int c2lo = d == 3 ? clo[2] : 0, c2hi = d == 3 ? chi_[2] : 0;
    for (int c0 = clo[0]; c0 <= chi_[0]; ++c0)
      for (int c1 = clo[1]; c1 <= chi_[1]; ++c1)
        for (int c2 = c2lo; c2 <= c2hi; ++c2) {
          int cell = c0;
          cell = cell * cl.nc[1] + c1;
          if (d == 3) cell = cell * cl.nc[2] + c2;
          for (int s = cl.start[cell]; s < cl.start[cell + 1]; ++s) {
            const std::size_t j = static_cast<std::size_t>(cl.order[s]);
            if (j <= i) continue;
            const double* xj = ens.pos(j);
            double dx[3] = {0, 0, 0};
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) {
              dx[a] = xi[a] - xj[a];
              r2 += dx[a] * dx[a];
            }
            if (r2 >= reach * reach) continue;
            if (r2 == 0.0) {
              // coincident pair: every gradient kernel drops out (odd, or
              // zero at the origin), but the even mollifier still counts
              out.rho[i] += v0;
              out.rho[j] += v0;
              continue;
            }
            const double r = std::sqrt(r2);
            if (r < p.eps_k) {
              // (grad Phi^{eps_k} - grad Phi)(dx); the enclosed-mass deficit
              // is formed first so the two singular halves never meet
              const double coef =
                  -(encl(r / p.eps_k) - 1.0) / (detail::surface_at(d, r) * r);
              for (int a = 0; a < d; ++a) {
                const double ga = coef * dx[a];
                out.b_agg[i * d + a] += ga;
                out.b_agg[j * d + a] -= ga;
              }
            }
            if (r < p.eps_p) {
              const double v = mollifier_value_radial(r, d, p.eps_p);
              out.rho[i] += v;
              out.rho[j] += v;
              const double dvdr =
                  cd / std::pow(p.eps_p, d) * bump_profile_deriv(r / p.eps_p) / p.eps_p;
              for (int a = 0; a < d; ++a) {
                const double ga = dvdr * dx[a] / r;
                gv[i * d + a] += ga;
                gv[j * d + a] -= ga;
              }
            }
          }
        }
  }

  for (std::size_t i = 0; i < n; ++i) {
    out.rho[i] *= inv_n;
    const double pp = plam.prime(out.rho[i]);
    for (int a = 0; a < d; ++a) {
      out.b_agg[i * d + a] *= p.chi * inv_n;
      out.b[i * d + a] = out.b_agg[i * d + a] - pp * gv[i * d + a] * inv_n;
    }
  }
  return out;
}

// Step size for the Euler-Maruyama update: the drift must not carry a
// particle further than a tenth of the finest interaction scale per step.
inline double particle_dt(const ParticleDrift& dr, const SimParams& p, double dt_max) {
  double bmax = 0.0;
  for (double v : dr.b) bmax = std::max(bmax, std::fabs(v));
  if (bmax == 0.0) return dt_max;
  return std::min(dt_max, std::min(p.eps_k, p.eps_p) / (10.0 * bmax));
}

// X += dt b + sqrt(2 sigma dt) xi, with noise words indexed from
// noise_base + i*d + a; callers advance noise_base by N*d per step.
inline void apply_em_step(ParticleEnsemble& ens, const ParticleDrift& dr, double sigma,
                          double dt, const CounterRng& rng, std::uint64_t noise_base) {
  const std::size_t n = ens.size();
  const int d = ens.d;
  if (dr.b.size() != n * static_cast<std::size_t>(d))
    throw std::invalid_argument("apply_em_step: drift/ensemble size mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("apply_em_step: need dt > 0");
  if (sigma < 0.0) throw std::invalid_argument("apply_em_step: need sigma >= 0");
  const double amp = std::sqrt(2.0 * sigma * dt);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      double z = ens.x[i * d + a] + dt * dr.b[i * d + a];
      if (amp > 0.0) z += amp * rng.normal(noise_base + i * d + a);
      ens.x[i * d + a] = z;
    }
}

// one interacting step: drift, adaptive dt, then the shared EM update
inline double step_particles(ParticleEnsemble& ens, const SimParams& p, double dt_max,
                             const CounterRng& rng, std::uint64_t noise_base) {
  const ParticleDrift dr = pair_drift(ens, p);
  const double dt = particle_dt(dr, p, dt_max);
  apply_em_step(ens, dr, p.sigma, dt, rng, noise_base);
  return dt;
}

// ---------------------------------------------------------------------------
// McKean-Vlasov dynamics in fields frozen from a PDE trajectory

struct FrozenFields {
  Grid grid;
  std::vector<double> times;       // snapshot times, strictly increasing
  std::vector<VectorField> drift;  // b(times[k], .) sampled at cell centers

  // piecewise-constant (left) in time, multilinear in space, clamped to the
  // cell-center hull at the edges
  void sample(double t, const double* x, double* out) const {
    std::size_t k = 0;
    while (k + 1 < times.size() && times[k + 1] <= t) ++k;
    const VectorField& f = drift[k];
    const int n = grid.n;
    int i0[3] = {0, 0, 0};
    double w[3] = {0, 0, 0};
    for (int a = 0; a < grid.d; ++a) {
      const double s = (x[a] + grid.half_width) / grid.h - 0.5;
      double fl = std::floor(s);
      fl = std::min(static_cast<double>(n - 2), std::max(0.0, fl));
      i0[a] = static_cast<int>(fl);
      w[a] = std::min(1.0, std::max(0.0, s - fl));
    }
    for (int a = 0; a < grid.d; ++a) {
      double acc = 0.0;
      if (grid.d == 2) {
        for (int da = 0; da < 2; ++da)
          for (int db = 0; db < 2; ++db) {
            const double wt = (da ? w[0] : 1.0 - w[0]) * (db ? w[1] : 1.0 - w[1]);
            acc += wt * f.comp[a][grid.idx(i0[0] + da, i0[1] + db)];
          }
      } else {
        for (int da = 0; da < 2; ++da)
          for (int db = 0; db < 2; ++db)
            for (int dc = 0; dc < 2; ++dc) {
              const double wt = (da ? w[0] : 1.0 - w[0]) * (db ? w[1] : 1.0 - w[1]) *
                                (dc ? w[2] : 1.0 - w[2]);
              acc += wt * f.comp[a][grid.idx(i0[0] + da, i0[1] + db, i0[2] + dc)];
            }
      }
      out[a] = acc;
    }
  }
};

// Rebuilds b(t, x) = chi grad c - p_lam'(w_p) (grad V^{eps_p} * u) for every
// snapshot of a mollified-system trajectory.
inline FrozenFields frozen_drift_from(const Trajectory& tr) {
  if (tr.snapshots.empty()) throw std::invalid_argument("frozen_drift_from: no snapshots");
  const SimParams& p = tr.params;
  if (!(p.eps_k > 0.0) || !(p.eps_p > 0.0))
    throw std::invalid_argument("frozen_drift_from: trajectory lacks mollification scales");
  const Grid& g = tr.grid;
  const PressureLaw plam(p.m, p.lambda);
  const KernelSpectrum vp = mollifier_kernel_spectrum(g, p.eps_p);
  const auto gphi = grad_phi_mollified_spectra(g, p.eps_k);
  const auto gvp = mollifier_gradient_spectra(g, p.eps_p);

  FrozenFields out;
  out.grid = g;
  out.times = tr.times;
  out.drift.reserve(tr.snapshots.size());
  for (const ScalarField& u : tr.snapshots) {
    const FieldSpectrum fs = forward_field(u);
    const ScalarField wp = convolve_spectrum(fs, vp, g);
    VectorField b(g);
    for (int a = 0; a < g.d; ++a) {
      const ScalarField gc = convolve_spectrum(fs, gphi[a], g);
      const ScalarField gva = convolve_spectrum(fs, gvp[a], g);
      for (std::size_t q = 0; q < u.v.size(); ++q)
        b.comp[a][q] = p.chi * gc.v[q] - plam.prime(std::max(wp.v[q], 0.0)) * gva.v[q];
    }
    out.drift.push_back(std::move(b));
  }
  return out;
}

// EM step in frozen fields; returns how many particles had to be clamped
// back to the cell-center hull (a diagnostic -- a healthy run reports 0).
inline std::size_t step_mckean_vlasov(ParticleEnsemble& ens, const FrozenFields& fields,
                                      double sigma, double t, double dt,
                                      const CounterRng& rng, std::uint64_t noise_base) {
  if (ens.d != fields.grid.d)
    throw std::invalid_argument("step_mckean_vlasov: dimension mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("step_mckean_vlasov: need dt > 0");
  const std::size_t n = ens.size();
  const int d = ens.d;
  const double amp = std::sqrt(2.0 * sigma * dt);
  const double lo = -fields.grid.half_width + 0.5 * fields.grid.h;
  const double hi = fields.grid.half_width - 0.5 * fields.grid.h;
  std::size_t clamped = 0;
  double b[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    fields.sample(t, ens.pos(i), b);
    bool hit = false;
    for (int a = 0; a < d; ++a) {
      double z = ens.x[i * d + a] + dt * b[a];
      if (amp > 0.0) z += amp * rng.normal(noise_base + i * d + a);
      if (z < lo) {
        z = lo;
        hit = true;
      } else if (z > hi) {
        z = hi;
        hit = true;
      }
      ens.x[i * d + a] = z;
    }
    if (hit) ++clamped;
  }
  return clamped;
}

// ---------------------------------------------------------------------------
// kernel density estimate of the ensemble

// Deposits V^{eps}(x - X_i) on the grid with each particle's stamp
// renormalized to mass exactly 1/N, so the result integrates to 1 whenever
// every particle has at least one grid cell within range (guaranteed by the
// resolution guard h <= eps/2).
inline ScalarField empirical_density(const ParticleEnsemble& ens, const Grid& g, double eps) {
  if (ens.d != g.d) throw std::invalid_argument("empirical_density: dimension mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("empirical_density: need eps > 0");
  if (g.h > eps / 2.0 * (1.0 + 1e-12))
    throw std::invalid_argument("empirical_density: grid too coarse, need h <= eps/2");
  const std::size_t n = ens.size();
  if (n == 0) throw std::invalid_argument("empirical_density: empty ensemble");
  ScalarField out(g);
  const double vol = g.cell_volume();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::size_t> cells;
  std::vector<double> vals;
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = ens.pos(i);
    int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
    for (int a = 0; a < ens.d; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::ceil((xi[a] - eps + g.half_width) / g.h - 0.5)));
      hi[a] = std::min(g.n - 1,
                       static_cast<int>(std::floor((xi[a] + eps + g.half_width) / g.h - 0.5)));
    }
    cells.clear();
    vals.clear();
    double sum = 0.0;
    const int k_lo = ens.d == 3 ? lo[2] : 0, k_hi = ens.d == 3 ? hi[2] : 0;
    for (int ii = lo[0]; ii <= hi[0]; ++ii)
      for (int jj = lo[1]; jj <= hi[1]; ++jj)
        for (int kk = k_lo; kk <= k_hi; ++kk) {
          double dx[3] = {g.coord(ii) - xi[0], g.coord(jj) - xi[1], 0.0};
          if (ens.d == 3) dx[2] = g.coord(kk) - xi[2];
          const double v = mollifier_value(dx, ens.d, eps);
          if (v > 0.0) {
            cells.push_back(ens.d == 2 ? g.idx(ii, jj) : g.idx(ii, jj, kk));
            vals.push_back(v);
            sum += v;
          }
        }
    if (sum <= 0.0)
      throw std::runtime_error("empirical_density: particle " + std::to_string(i) +
                               " is out of the grid's reach");
    const double scale = inv_n / (sum * vol);
    for (std::size_t c = 0; c < cells.size(); ++c) out.v[cells[c]] += vals[c] * scale;
  }
  return out;
}

} // namespace kslab

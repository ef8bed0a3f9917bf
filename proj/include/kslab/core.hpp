#pragma once
// Shared domain types: simulation parameters, cell-centered grids on the
// truncated box [-L,L]^d (d = 2 or 3), scalar/vector fields stored as flat
// row-major arrays, and per-run trajectories.
//
// Conventions used throughout the library:
//   * grids are cell-centered: coord(i) = -L + (i + 1/2) h, h = 2L/n.
//     Cell centers come in exact mirror pairs (i <-> n-1-i), which is what
//     makes the even-symmetry preservation checks exact.
//   * ScalarField values are laid out row-major: index (i*n + j) for d=2 and
//     ((i*n + j)*n + k) for d=3, axis 0 slowest.
//   * mass(f) = sum(f) * h^d (midpoint quadrature on the working grid).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace kslab {

// All model/discretization constants of the approximation ladder.
// chi is carried explicitly but pinned to 1 (validated); experiments that
// need the chemotaxis term disabled (the porous-medium oracle) do so through
// a solver option, not by changing chi.
struct SimParams {
  int d = 2;                    // spatial dimension, 2 or 3
  double m = 2.0;               // pressure exponent, p(u) = m/(m-1) u^{m-1}
  double sigma = 0.0;           // viscosity coefficient, >= 0
  double eps_k = 0.1;           // aggregation mollification radius
  double eps_p = 0.1;           // diffusion mollification radius
  double lambda = 0.0;          // pressure cutoff parameter; 0 = no cutoff
  double eta = 0.0;             // diffusion shift in (u+eta)^m
  double chi = 1.0;             // chemotactic sensitivity, fixed 1
  double t_end = 0.1;           // final time
  std::uint64_t seed = 0;       // RNG seed

  friend bool operator==(const SimParams&, const SimParams&) = default;
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

struct Grid {
  int d = 2;               // dimension of the fields living on this grid
  double half_width = 1.0; // L; the domain is [-L, L]^d
  int n = 64;              // cells per dimension
  double h = 2.0 / 64.0;   // spacing, 2L/n

  Grid() = default;
  Grid(int d_, double half_width_, int n_)
      : d(d_), half_width(half_width_), n(n_), h(2.0 * half_width_ / n_) {
    if (d != 2 && d != 3) throw std::invalid_argument("Grid: d must be 2 or 3");
    if (!(half_width > 0.0)) throw std::invalid_argument("Grid: half_width must be > 0");
    if (n <= 0) throw std::invalid_argument("Grid: n must be > 0");
  }

  std::size_t size() const {
    std::size_t s = 1;
    for (int a = 0; a < d; ++a) s *= static_cast<std::size_t>(n);
    return s;
  }
  // center of cell i along one axis
  double coord(int i) const { return -half_width + (i + 0.5) * h; }
  double cell_volume() const { return d == 2 ? h * h : h * h * h; }

  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * n + j;
  }
  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n + j) * n + k;
  }
  // stride of axis a in the flat layout
  std::size_t stride(int a) const {
    std::size_t s = 1;
    for (int b = d - 1; b > a; --b) s *= static_cast<std::size_t>(n);
    return s;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct ScalarField {
  Grid grid;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid(g), v(g.size(), 0.0) {}

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
  std::size_t size() const { return v.size(); }

  // fill from a callable f(x) with x a pointer to d coordinates
  template <class F>
  void fill(F&& f) {
    const int n = grid.n;
    double x[3] = {0, 0, 0};
    if (grid.d == 2) {
      std::size_t q = 0;
      for (int i = 0; i < n; ++i) {
        x[0] = grid.coord(i);
        for (int j = 0; j < n; ++j, ++q) {
          x[1] = grid.coord(j);
          v[q] = f(x);
        }
      }
    } else {
      std::size_t q = 0;
      for (int i = 0; i < n; ++i) {
        x[0] = grid.coord(i);
        for (int j = 0; j < n; ++j) {
          x[1] = grid.coord(j);
          for (int k = 0; k < n; ++k, ++q) {
            x[2] = grid.coord(k);
            v[q] = f(x);
          }
        }
      }
    }
  }
};

struct VectorField {
  Grid grid;
  std::array<std::vector<double>, 3> comp; // only the first grid.d are used

  VectorField() = default;
  explicit VectorField(const Grid& g) : grid(g) {
    for (int a = 0; a < g.d; ++a) comp[a].assign(g.size(), 0.0);
  }
};

// One diagnostics record per time step (plus one for the initial state).
struct DiagnosticsRow {
  double t, mass, l1, l2, l2m, linf, min, dt;
};

enum class SolveStatus {
  Completed,
  SuspectedBlowup, // NaN or explosive sup-norm growth; not an error
};

struct Trajectory {
  SimParams params;
  Grid grid;
  std::vector<double> times;           // snapshot times, strictly increasing
  std::vector<ScalarField> snapshots;  // one field per entry of `times`
  std::vector<DiagnosticsRow> diagnostics;
  SolveStatus status = SolveStatus::Completed;
  // on SuspectedBlowup the last entry of times/snapshots is the final healthy
  // state, and note says what tripped the abort
  std::string note;
};

// ---- field arithmetic ----

inline double mass(const ScalarField& f) {
  double s = 0.0;
  for (double x : f.v) s += x;
  return s * f.grid.cell_volume();
}

inline double min_value(const ScalarField& f) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : f.v) m = std::min(m, x);
  return m;
}

inline double max_value(const ScalarField& f) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : f.v) m = std::max(m, x);
  return m;
}

inline bool all_finite(const ScalarField& f) {
  for (double x : f.v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline ScalarField add(const ScalarField& f, const ScalarField& g) {
  if (!(f.grid == g.grid)) throw std::invalid_argument("add: grid mismatch");
  ScalarField out = f;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += g.v[i];
  return out;
}

inline ScalarField scale(const ScalarField& f, double a) {
  ScalarField out = f;
  for (double& x : out.v) x *= a;
  return out;
}

// reflect along one axis: i -> n-1-i (an involution on the cell-centered grid)
inline ScalarField reflect(const ScalarField& f, int axis) {
  if (axis < 0 || axis >= f.grid.d) throw std::invalid_argument("reflect: bad axis");
  ScalarField out(f.grid);
  const int n = f.grid.n;
  const std::size_t s = f.grid.stride(axis);
  const std::size_t total = f.size();
  for (std::size_t q = 0; q < total; ++q) {
    const int ia = static_cast<int>((q / s) % n);
    const std::size_t r = q + static_cast<std::size_t>(n - 1 - 2 * ia) * s;
    out.v[r] = f.v[q];
  }
  return out;
}

// ---- parameter validation ----

// Returns every violated invariant as a human-readable message; empty = ok.
inline std::vector<std::string> validate(const SimParams& p, const Grid& g) {
  std::vector<std::string> errs;
  if (p.d != 2 && p.d != 3) errs.push_back("dimension d must be 2 or 3");
  if (g.d != p.d) errs.push_back("grid dimension differs from params.d");
  if (!(p.m > 1.0)) {
    if (p.m == 1.0)
      errs.push_back("pressure exponent m=1 unsupported (p = m/(m-1) u^{m-1})");
    else
      errs.push_back("pressure exponent must satisfy m > 1");
  }
  if (!(p.sigma >= 0.0)) errs.push_back("sigma must be >= 0");
  if (!(p.eta >= 0.0)) errs.push_back("eta must be >= 0");
  if (p.chi != 1.0) errs.push_back("chi must be exactly 1");
  if (!(p.t_end > 0.0)) errs.push_back("t_end must be > 0");
  if (p.lambda < 0.0) errs.push_back("lambda must be >= 0");
  if (p.lambda > 0.0 && !(2.0 * p.lambda < 1.0 / p.lambda))
    errs.push_back("2λ ≥ 1/λ: pressure cutoff identity band empty (need lambda < 1/sqrt(2))");
  if (!is_power_of_two(g.n)) errs.push_back("grid n must be a power of two");
  if (!(g.half_width > 0.0)) errs.push_back("grid half_width must be > 0");
  return errs;
}

// Additional checks for runs that use the mollified kernels on grid g.
inline std::vector<std::string> validate_kernel_resolution(const SimParams& p, const Grid& g) {
  std::vector<std::string> errs;
  if (!(p.eps_k > 0.0)) errs.push_back("eps_k must be > 0 for mollified systems");
  if (!(p.eps_p > 0.0)) errs.push_back("eps_p must be > 0 for mollified systems");
  if (p.eps_k > 0.0 && g.h > p.eps_k / 4.0 * (1.0 + 1e-12))
    errs.push_back("grid too coarse: need h <= eps_k/4");
  if (p.eps_p > 0.0 && g.h > p.eps_p / 4.0 * (1.0 + 1e-12))
    errs.push_back("grid too coarse: need h <= eps_p/4");
  return errs;
}

} // namespace kslab

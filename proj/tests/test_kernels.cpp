#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "kslab/convolve.hpp"
#include "kslab/core.hpp"
#include "kslab/mollifier.hpp"
#include "kslab/potentials.hpp"

using namespace kslab;

namespace {

// deterministic uniform(0,1) stream for test fields
struct Lcg {
  std::uint64_t s;
  double operator()() {
    s = s * 6364136223846793005ull + 1442695040888963407ull;
    return static_cast<double>(s >> 11) * 0x1.0p-53;
  }
};

double linf(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

} // namespace

TEST_CASE("bump normalization constants match frozen quadrature values") {
  CHECK(std::fabs(bump_normalization(2) - 2.143565775792248) < 1e-12);
  CHECK(std::fabs(bump_normalization(3) - 2.2671167396083534) < 1e-12);
}

TEST_CASE("mollifier support, symmetry, positivity") {
  const double eps = 0.37;
  for (int d : {2, 3}) {
    double x[3] = {1.5 * eps, 0.0, 0.0};
    CHECK(mollifier_value(x, d, eps) == 0.0); // exact zero outside support
    double y[3] = {eps, 0.0, 0.0};
    CHECK(mollifier_value(y, d, eps) == 0.0); // boundary included in the zero set
    Lcg rng{7};
    for (int k = 0; k < 50; ++k) {
      double a[3] = {0, 0, 0}, b[3] = {0, 0, 0};
      for (int q = 0; q < d; ++q) {
        a[q] = (2.0 * rng() - 1.0) * eps;
        b[q] = -a[q];
      }
      const double va = mollifier_value(a, d, eps);
      REQUIRE(va == mollifier_value(b, d, eps)); // V(x) = V(-x) exactly
      CHECK(va >= 0.0);
    }
  }
}

TEST_CASE("continuum normalization integrates to 1 on a fine grid") {
  // plain midpoint sum of the continuum-normalized kernel at h = eps/16;
  // the measured quadrature error of the C^infty bump at this resolution
  const double eps = 0.5;
  Grid g(2, 1.0, 64); // h = 1/32 = eps/16
  double sum = 0.0;
  double x[3] = {0, 0, 0};
  for (int i = 0; i < g.n; ++i) {
    x[0] = g.coord(i);
    for (int j = 0; j < g.n; ++j) {
      x[1] = g.coord(j);
      sum += mollifier_value(x, 2, eps);
    }
  }
  CHECK(std::fabs(sum * g.h * g.h - 1.0) < 1e-5);
}

TEST_CASE("renormalized kernel table has discrete mass exactly 1") {
  Grid g(2, 1.0, 64);
  const double eps = 0.25; // h = 1/32 = eps/8
  // delta spike -> the convolution returns the kernel table itself
  ScalarField f(g);
  const int i0 = 40, j0 = 24;
  f.v[g.idx(i0, j0)] = 1.0;
  ScalarField out = convolve_free_space(f, mollifier_kernel_spectrum(g, eps));
  double table_sum = 0.0;
  for (double v : out.v) table_sum += v;
  CHECK(std::fabs(table_sum - 1.0) < 1e-12); // support interior => full kernel mass

  // values equal V^eps at cell offsets, scaled by the discrete normalization
  double raw_mass = 0.0;
  for (int i = -g.n + 1; i < g.n; ++i)
    for (int j = -g.n + 1; j < g.n; ++j) {
      double x[3] = {i * g.h, j * g.h, 0.0};
      raw_mass += mollifier_value(x, 2, eps) * g.h * g.h;
    }
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) {
      double x[3] = {(i - i0) * g.h, (j - j0) * g.h, 0.0};
      const double expect = mollifier_value(x, 2, eps) * g.h * g.h / raw_mass;
      REQUIRE(std::fabs(out.v[g.idx(i, j)] - expect) < 1e-12);
    }
}

TEST_CASE("FFT convolution equals the nested-sum oracle on a 16^d grid") {
  for (int d : {2, 3}) {
    Grid g(d, 1.0, 16);
    const double eps = 0.5; // h = 1/8 = eps/4
    ScalarField f(g);
    Lcg rng{101 + static_cast<std::uint64_t>(d)};
    for (auto& v : f.v) v = rng();

    ScalarField fft = convolve_free_space(f, mollifier_kernel_spectrum(g, eps));

    // direct aperiodic nested sum with the same table values
    const int n = g.n;
    const int w = n; // offsets -(n-1)..(n-1)
    std::vector<double> table(static_cast<std::size_t>(2 * w - 1) * (2 * w - 1) *
                                  (d == 3 ? 2 * w - 1 : 1),
                              0.0);
    double raw_sum = 0.0;
    auto tidx = [&](int i, int j, int k) {
      std::size_t q = static_cast<std::size_t>(i + w - 1) * (2 * w - 1) + (j + w - 1);
      if (d == 3) q = q * (2 * w - 1) + (k + w - 1);
      return q;
    };
    for (int i = -(w - 1); i <= w - 1; ++i)
      for (int j = -(w - 1); j <= w - 1; ++j) {
        if (d == 2) {
          double x[3] = {i * g.h, j * g.h, 0.0};
          const double v = mollifier_value(x, d, eps);
          table[tidx(i, j, 0)] = v;
          raw_sum += v;
        } else {
          for (int k = -(w - 1); k <= w - 1; ++k) {
            double x[3] = {i * g.h, j * g.h, k * g.h};
            const double v = mollifier_value(x, d, eps);
            table[tidx(i, j, k)] = v;
            raw_sum += v;
          }
        }
      }
    for (auto& v : table) v /= raw_sum; // same renormalization convention

    ScalarField oracle(g);
    if (d == 2) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) s += table[tidx(i - a, j - b, 0)] * f.v[g.idx(a, b)];
          oracle.v[g.idx(i, j)] = s;
        }
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) {
            double s = 0.0;
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                  s += table[tidx(i - a, j - b, k - c)] * f.v[g.idx(a, b, c)];
            oracle.v[g.idx(i, j, k)] = s;
          }
    }

    double diff = 0.0, scale = 0.0;
    for (std::size_t q = 0; q < fft.v.size(); ++q) {
      diff = std::max(diff, std::fabs(fft.v[q] - oracle.v[q]));
      scale = std::max(scale, std::fabs(oracle.v[q]));
    }
    CHECK(diff <= 1e-12 * scale);
    // a whole-box field loses mass through the open boundary; the FFT path
    // must lose exactly as much as the direct sum
    CHECK(std::fabs(mass(fft) - mass(oracle)) <= 1e-12 * mass(f));
  }
}

TEST_CASE("mollification preserves mass to 1e-10 for interior fields") {
  Grid g(2, 1.0, 64);
  const double eps = 0.25;
  const KernelSpectrum K = mollifier_kernel_spectrum(g, eps);
  ScalarField f(g);
  f.fill([&](const double* x) {
    double y[3] = {x[0] + 0.2, x[1] - 0.1, 0.0};
    return mollifier_value(y, 2, 0.3); // compact support well inside the box
  });
  ScalarField out = convolve_free_space(f, K);
  CHECK(std::fabs(mass(out) - mass(f)) <= 1e-10 * mass(f));
}

TEST_CASE("convolution commutes with whole-cell translations away from the boundary") {
  Grid g(2, 1.0, 64);
  const double eps = 0.25;
  const KernelSpectrum K = mollifier_kernel_spectrum(g, eps);
  const int si = 3, sj = -2;
  ScalarField f(g), fs(g);
  f.fill([&](const double* x) {
    double y[3] = {x[0] + 0.25, x[1] - 0.125, 0.0};
    return mollifier_value(y, 2, 0.3);
  });
  // shift by whole cells
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) {
      const int a = i - si, b = j - sj;
      if (a >= 0 && a < g.n && b >= 0 && b < g.n) fs.v[g.idx(i, j)] = f.v[g.idx(a, b)];
    }
  ScalarField cf = convolve_free_space(f, K);
  ScalarField cfs = convolve_free_space(fs, K);
  double maxdiff = 0.0;
  for (int i = 8; i < g.n - 8; ++i)
    for (int j = 8; j < g.n - 8; ++j) {
      const int a = i - si, b = j - sj;
      maxdiff = std::max(maxdiff, std::fabs(cfs.v[g.idx(i, j)] - cf.v[g.idx(a, b)]));
    }
  CHECK(maxdiff <= 1e-12 * linf(cf.v));
}

TEST_CASE("Young's inequality and positivity for mollification") {
  Grid g(2, 1.0, 32);
  const double eps = 0.25;
  const KernelSpectrum K = mollifier_kernel_spectrum(g, eps);
  Lcg rng{55};
  for (int trial = 0; trial < 5; ++trial) {
    ScalarField f(g);
    for (auto& v : f.v) v = rng();
    ScalarField out = convolve_free_space(f, K);
    auto norms = [&](const ScalarField& u) {
      double l1 = 0, l2 = 0, li = 0;
      for (double v : u.v) {
        l1 += std::fabs(v);
        l2 += v * v;
        li = std::max(li, std::fabs(v));
      }
      const double hd = u.grid.cell_volume();
      return std::array<double, 3>{l1 * hd, std::sqrt(l2 * hd), li};
    };
    const auto nf = norms(f), no = norms(out);
    CHECK(no[0] <= nf[0] * (1.0 + 1e-10));
    CHECK(no[1] <= nf[1] * (1.0 + 1e-10));
    CHECK(no[2] <= nf[2] * (1.0 + 1e-10));
    CHECK(min_value(out) >= -1e-13 * no[2]);
  }
}

TEST_CASE("enclosed-mass table matches independent quadrature") {
  for (int d : {2, 3}) {
    BumpEnclosedMass Q(d);
    CHECK(Q(1.0) == 1.0);
    CHECK(Q(0.0) == 0.0);
    // independent fine trapezoid for Q(0.5)
    auto radial = [&](double s) { return bump_profile(s) * (d == 2 ? s : s * s); };
    const int N = 200000;
    double half = 0.0, total = 0.0;
    for (int i = 0; i < N; ++i) {
      const double a = static_cast<double>(i) / N, b = static_cast<double>(i + 1) / N;
      const double panel = 0.5 * (radial(a) + radial(b)) / N;
      total += panel;
      if (b <= 0.5 + 1e-15) half += panel;
    }
    CHECK(std::fabs(Q(0.5) - half / total) < 1e-6);
    // monotone
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double q = Q(i / 100.0);
      CHECK(q >= prev);
      prev = q;
    }
  }
}

TEST_CASE("newtonian potential closed forms and singularity") {
  double x1[3] = {1.0, 0.0, 0.0};
  CHECK(newtonian_potential(x1, 2) == 0.0); // -(1/2pi) log 1
  CHECK(newtonian_potential(x1, 3) == Catch::Approx(1.0 / (4.0 * M_PI)).epsilon(1e-13));
  double xe[3] = {M_E, 0.0, 0.0};
  CHECK(newtonian_potential(xe, 2) == Catch::Approx(-1.0 / (2.0 * M_PI)).epsilon(1e-13));
  double x0[3] = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(newtonian_potential(x0, 2), std::domain_error);
  CHECK_THROWS_AS(newtonian_gradient(x0, 2, x1), std::domain_error);
}

TEST_CASE("phi origin cell average: closed form (d=2) vs quadrature") {
  const double h = 0.125;
  // midpoint quadrature of Phi over the origin cell, refined + extrapolated
  auto avg = [&](int nq) {
    double s = 0.0;
    for (int i = 0; i < nq; ++i) {
      const double x = ((i + 0.5) / nq - 0.5) * h;
      for (int j = 0; j < nq; ++j) {
        const double y = ((j + 0.5) / nq - 0.5) * h;
        s += -0.5 * std::log(x * x + y * y) / (2.0 * M_PI);
      }
    }
    return s / (static_cast<double>(nq) * nq);
  };
  const double v1 = avg(256), v2 = avg(512);
  const double quad = v2 + (v2 - v1) / 3.0;
  CHECK(std::fabs(phi_origin_cell_average(2, h) - quad) < 1e-8);
}

TEST_CASE("mollified potential gradient table: origin, oddness, far field") {
  // d=3 per the far-field example; n=128, L=2.56, eps=0.2 -> h=0.04 <= eps/4
  const Grid g(3, 2.56, 128);
  const double eps = 0.2;
  VectorField T = mollified_potential_gradient_table(eps, g);
  const int n = g.n, c = n / 2;
  // origin entry is the exact zero vector
  for (int a = 0; a < 3; ++a) CHECK(T.comp[a][g.idx(c, c, c)] == 0.0);
  // oddness: table(-x) + table(x) = 0 componentwise (node offsets pair i <-> 2c - i)
  Lcg rng{9};
  for (int k = 0; k < 200; ++k) {
    const int i = 1 + static_cast<int>(rng() * (n - 1));
    const int j = 1 + static_cast<int>(rng() * (n - 1));
    const int l = 1 + static_cast<int>(rng() * (n - 1));
    const int i2 = 2 * c - i, j2 = 2 * c - j, l2 = 2 * c - l;
    if (i2 < 0 || i2 >= n || j2 < 0 || j2 >= n || l2 < 0 || l2 >= n) continue;
    for (int a = 0; a < 3; ++a)
      REQUIRE(T.comp[a][g.idx(i, j, l)] + T.comp[a][g.idx(i2, j2, l2)] == 0.0);
  }
  // far field at |x| = 10 eps: matches both the Newtonian closed form and a
  // brute-force quadrature of (grad Phi) * V^{eps}
  const double x0 = 10.0 * eps; // = 2.0, node index c + 50
  const int i0 = c + static_cast<int>(std::round(x0 / g.h));
  const double tx = T.comp[0][g.idx(i0, c, c)];
  const double closed = -x0 / (4.0 * M_PI * x0 * x0 * x0);
  CHECK(std::fabs(tx - closed) <= 1e-4 * std::fabs(closed));
  // quadrature oracle: int grad Phi(x0 - y) V(y) dy over the mollifier ball
  const int nq = 96;
  double acc = 0.0;
  for (int i = 0; i < nq; ++i) {
    const double yx = ((i + 0.5) / nq - 0.5) * 2.0 * eps;
    for (int j = 0; j < nq; ++j) {
      const double yy = ((j + 0.5) / nq - 0.5) * 2.0 * eps;
      for (int k = 0; k < nq; ++k) {
        const double yz = ((k + 0.5) / nq - 0.5) * 2.0 * eps;
        double y[3] = {yx, yy, yz};
        const double V = mollifier_value(y, 3, eps);
        if (V == 0.0) continue;
        double dx[3] = {x0 - yx, -yy, -yz};
        double gph[3];
        newtonian_gradient(dx, 3, gph);
        acc += gph[0] * V;
      }
    }
  }
  acc *= std::pow(2.0 * eps / nq, 3);
  CHECK(std::fabs(tx - acc) <= 1e-4 * std::fabs(acc));
}

TEST_CASE("solve_poisson: zero in, zero out") {
  Grid g(2, 1.0, 32);
  ScalarField u(g);
  PoissonResult r = solve_poisson(u);
  CHECK(linf(r.c.v) == 0.0);
  CHECK(linf(r.grad_c.comp[0]) == 0.0);
  CHECK(linf(r.grad_c.comp[1]) == 0.0);
}

TEST_CASE("solve_poisson: interior 5-point residual below 1e-3 at n=256 (d=2)") {
  Grid g(2, 2.0, 256);
  ScalarField u(g);
  u.fill([&](const double* x) { return std::exp(-(x[0] * x[0] + x[1] * x[1]) / (2.0 * 0.25 * 0.25)); });
  u = scale(u, 1.0 / mass(u));
  PoissonResult r = solve_poisson(u);
  const int n = g.n;
  const double h2 = g.h * g.h;
  double res = 0.0;
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const double lap = (r.c.v[g.idx(i + 1, j)] + r.c.v[g.idx(i - 1, j)] + r.c.v[g.idx(i, j + 1)] +
                          r.c.v[g.idx(i, j - 1)] - 4.0 * r.c.v[g.idx(i, j)]) /
                         h2;
      res = std::max(res, std::fabs(lap + u.v[g.idx(i, j)]));
    }
  CHECK(res / max_value(u) <= 1e-3);
}

TEST_CASE("solve_poisson: 3D far field matches the monopole term within 1%") {
  Grid g(3, 2.0, 64);
  ScalarField u(g);
  u.fill([&](const double* x) {
    return std::exp(-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * 0.2 * 0.2));
  });
  const double M = mass(u);
  PoissonResult r = solve_poisson(u);
  // cell center nearest (L/2, 0, 0)
  int i0 = 0, j0 = 0;
  double best = 1e30;
  for (int i = 0; i < g.n; ++i)
    if (std::fabs(g.coord(i) - 1.0) < best) {
      best = std::fabs(g.coord(i) - 1.0);
      i0 = i;
    }
  best = 1e30;
  for (int j = 0; j < g.n; ++j)
    if (std::fabs(g.coord(j)) < best) {
      best = std::fabs(g.coord(j));
      j0 = j;
    }
  const double rx = g.coord(i0), ry = g.coord(j0), rz = g.coord(j0);
  const double rr = std::sqrt(rx * rx + ry * ry + rz * rz);
  const double pred = M / (4.0 * M_PI * rr);
  CHECK(std::fabs(r.c.v[g.idx(i0, j0, j0)] - pred) <= 0.01 * pred);
}

TEST_CASE("grad c of an even density is odd (component-wise)") {
  Grid g(2, 1.0, 64);
  ScalarField u(g);
  u.fill([&](const double* x) { return std::exp(-(x[0] * x[0] + x[1] * x[1]) / 0.08); });
  PoissonResult r = solve_poisson(u);
  ScalarField gx(g);
  gx.v = r.grad_c.comp[0];
  ScalarField gxr = reflect(gx, 0);
  double dmax = 0.0, scale_ = linf(gx.v);
  for (std::size_t q = 0; q < gx.v.size(); ++q)
    dmax = std::max(dmax, std::fabs(gxr.v[q] + gx.v[q]));
  CHECK(dmax <= 1e-12 * scale_);
}

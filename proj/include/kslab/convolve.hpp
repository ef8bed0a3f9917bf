#pragma once
// Free-space (aperiodic) convolution on the working grid via zero-padded FFT.
//
// Fields occupy n cells per axis; transforms run on a 2n-per-axis padded grid
// so periodic wrap-around never contaminates the physical box.  Kernels are
// tabulated at the circular offsets k*h, k in [-n, n): entry a of the padded
// axis holds offset (a < n ? a : a - 2n) * h.  The offset k = -n (a = n) is
// never touched by an aperiodic convolution of two n-cell supports, so it is
// forced to zero — this keeps odd kernels (gradient tables) exactly odd and
// even kernels exactly even in the table.
//
// The h^d quadrature weight is folded into the kernel table, so
// convolve(f, K) approximates (k * f)(x) = int k(x-y) f(y) dy directly.
// Kernels representing probability densities can be renormalized so their
// discrete mass is exactly 1 (making mollification mass-preserving to
// round-off).
//
// Plans use FFTW_ESTIMATE: deterministic planning, bitwise-reproducible runs.
// One workspace (buffers + plans) is cached per (d, n) and guarded by a
// mutex, so concurrent convolutions on distinct fields are safe (they
// serialize on the shared workspace).

#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

#include "kslab/core.hpp"

namespace kslab {

struct KernelSpectrum {
  int d = 0, n = 0;
  std::vector<std::complex<double>> c;
};

struct FieldSpectrum {
  int d = 0, n = 0;
  std::vector<std::complex<double>> c;
};

namespace detail {

struct FftWorkspace {
  int d, n;
  std::size_t real_size, cplx_size;
  double* real_buf;
  fftw_complex* cplx_buf;
  fftw_plan fwd, bwd;
  std::mutex mu;

  FftWorkspace(int d_, int n_) : d(d_), n(n_) {
    const int p = 2 * n;
    real_size = d == 2 ? static_cast<std::size_t>(p) * p : static_cast<std::size_t>(p) * p * p;
    cplx_size = d == 2 ? static_cast<std::size_t>(p) * (n + 1)
                       : static_cast<std::size_t>(p) * p * (n + 1);
    real_buf = fftw_alloc_real(real_size);
    cplx_buf = fftw_alloc_complex(cplx_size);
    if (!real_buf || !cplx_buf) throw std::bad_alloc();
    if (d == 2) {
      fwd = fftw_plan_dft_r2c_2d(p, p, real_buf, cplx_buf, FFTW_ESTIMATE);
      bwd = fftw_plan_dft_c2r_2d(p, p, cplx_buf, real_buf, FFTW_ESTIMATE);
    } else {
      fwd = fftw_plan_dft_r2c_3d(p, p, p, real_buf, cplx_buf, FFTW_ESTIMATE);
      bwd = fftw_plan_dft_c2r_3d(p, p, p, cplx_buf, real_buf, FFTW_ESTIMATE);
    }
    if (!fwd || !bwd) throw std::runtime_error("FftWorkspace: FFTW planning failed");
  }
  ~FftWorkspace() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real_buf);
    fftw_free(cplx_buf);
  }
  FftWorkspace(const FftWorkspace&) = delete;
  FftWorkspace& operator=(const FftWorkspace&) = delete;
};

inline FftWorkspace& workspace_for(int d, int n) {
  static std::mutex cache_mu;
  static std::map<std::pair<int, int>, std::unique_ptr<FftWorkspace>> cache;
  std::lock_guard<std::mutex> lock(cache_mu);
  auto& slot = cache[{d, n}];
  if (!slot) slot = std::make_unique<FftWorkspace>(d, n);
  return *slot;
}

// embed an n^d field into the zeroed (2n)^d padded buffer at the low corner
inline void embed_field(const ScalarField& f, double* padded, int n, int d) {
  const int p = 2 * n;
  if (d == 2) {
    for (int i = 0; i < n; ++i)
      std::memcpy(padded + static_cast<std::size_t>(i) * p, f.v.data() + static_cast<std::size_t>(i) * n,
                  sizeof(double) * n);
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        std::memcpy(padded + (static_cast<std::size_t>(i) * p + j) * p,
                    f.v.data() + (static_cast<std::size_t>(i) * n + j) * n, sizeof(double) * n);
  }
}

// extract the low-corner n^d block of the padded buffer
inline void extract_field(const double* padded, ScalarField& out, int n, int d, double scale) {
  const int p = 2 * n;
  if (d == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out.v[static_cast<std::size_t>(i) * n + j] =
            padded[static_cast<std::size_t>(i) * p + j] * scale;
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          out.v[(static_cast<std::size_t>(i) * n + j) * n + k] =
              padded[(static_cast<std::size_t>(i) * p + j) * p + k] * scale;
  }
}

} // namespace detail

// Tabulate a kernel at the circular offsets of grid g and transform it.
// `eval` is called with a pointer to d offset coordinates.  If `renormalize`,
// the sampled table is scaled so its discrete mass (sum * h^d) equals
// `mass_target` exactly.  The h^d quadrature weight is always folded in.
template <class F>
KernelSpectrum make_kernel_spectrum(const Grid& g, F&& eval, bool renormalize,
                                    double mass_target = 1.0) {
  const int d = g.d, n = g.n, p = 2 * n;
  auto& ws = detail::workspace_for(d, n);
  std::lock_guard<std::mutex> lock(ws.mu);

  auto offset = [&](int a) { return (a < n ? a : a - p) * g.h; };
  double x[3] = {0, 0, 0};
  double sum = 0.0;
  if (d == 2) {
    for (int i = 0; i < p; ++i) {
      x[0] = offset(i);
      for (int j = 0; j < p; ++j) {
        x[1] = offset(j);
        const double val = (i == n || j == n) ? 0.0 : eval(static_cast<const double*>(x));
        ws.real_buf[static_cast<std::size_t>(i) * p + j] = val;
        sum += val;
      }
    }
  } else {
    for (int i = 0; i < p; ++i) {
      x[0] = offset(i);
      for (int j = 0; j < p; ++j) {
        x[1] = offset(j);
        for (int k = 0; k < p; ++k) {
          x[2] = offset(k);
          const double val =
              (i == n || j == n || k == n) ? 0.0 : eval(static_cast<const double*>(x));
          ws.real_buf[(static_cast<std::size_t>(i) * p + j) * p + k] = val;
          sum += val;
        }
      }
    }
  }

  const double hd = g.cell_volume();
  double w = hd;
  if (renormalize) {
    if (sum == 0.0) throw std::runtime_error("make_kernel_spectrum: zero-mass kernel");
    w = mass_target / sum;
  }
  for (std::size_t q = 0; q < ws.real_size; ++q) ws.real_buf[q] *= w;

  fftw_execute(ws.fwd);
  KernelSpectrum K;
  K.d = d;
  K.n = n;
  K.c.resize(ws.cplx_size);
  // std::complex<double> is layout-compatible with double[2]
  std::memcpy(reinterpret_cast<double*>(K.c.data()), &ws.cplx_buf[0][0],
              ws.cplx_size * 2 * sizeof(double));
  return K;
}

inline FieldSpectrum forward_field(const ScalarField& f) {
  const int d = f.grid.d, n = f.grid.n;
  auto& ws = detail::workspace_for(d, n);
  std::lock_guard<std::mutex> lock(ws.mu);
  std::memset(ws.real_buf, 0, ws.real_size * sizeof(double));
  detail::embed_field(f, ws.real_buf, n, d);
  fftw_execute(ws.fwd);
  FieldSpectrum out;
  out.d = d;
  out.n = n;
  out.c.resize(ws.cplx_size);
  std::memcpy(reinterpret_cast<double*>(out.c.data()), &ws.cplx_buf[0][0],
              ws.cplx_size * 2 * sizeof(double));
  return out;
}

inline ScalarField convolve_spectrum(const FieldSpectrum& fs, const KernelSpectrum& K,
                                     const Grid& g) {
  if (fs.d != K.d || fs.n != K.n || fs.d != g.d || fs.n != g.n)
    throw std::invalid_argument("convolve_spectrum: size mismatch");
  auto& ws = detail::workspace_for(g.d, g.n);
  std::lock_guard<std::mutex> lock(ws.mu);
  for (std::size_t q = 0; q < ws.cplx_size; ++q) {
    const std::complex<double> z = fs.c[q] * K.c[q];
    ws.cplx_buf[q][0] = z.real();
    ws.cplx_buf[q][1] = z.imag();
  }
  fftw_execute(ws.bwd);
  ScalarField out(g);
  const std::size_t logical = ws.real_size; // (2n)^d
  detail::extract_field(ws.real_buf, out, g.n, g.d, 1.0 / static_cast<double>(logical));
  return out;
}

inline ScalarField convolve_free_space(const ScalarField& f, const KernelSpectrum& K) {
  if (f.grid.d != K.d || f.grid.n != K.n)
    throw std::invalid_argument("convolve_free_space: size mismatch");
  return convolve_spectrum(forward_field(f), K, f.grid);
}

} // namespace kslab

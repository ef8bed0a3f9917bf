#pragma once
// Conservative finite-volume forward-Euler steppers for the four systems:
//
//   Degenerate   du/dt =             div(u grad p(u))            - chi div(u grad c)
//   Regularized  du/dt = sigma Lap u + div(u grad p(u))          - chi div(u grad c)
//   EtaApprox    du/dt = sigma Lap u + Lap (u+eta)^m             - chi div(u grad c)
//   NonLocal     du/dt = sigma Lap u + div(u grad p_lam(V^ep*u)) - chi div(u grad c)
//
// with -Lap c = u for the local kinds and -Lap c = V^ek*u for NonLocal
// (realized as grad c = (grad Phi^ek) * u).  Local kinds use the algebraic
// identity u grad p(u) = grad u^m, so their degenerate diffusion is the flux
// ((u_R+eta)^m - (u_L+eta)^m)/h; NonLocal keeps the drift form with
// donor-cell upwinding.  All boundary faces carry zero flux, so the update
// telescopes and mass is conserved to rounding.
//
// Update arithmetic (frozen; the bit-for-bit oracle in the tests mirrors it):
//   face value along axis a between cells L and R = q + stride(a):
//     F  = sigma * (u_R - u_L) / h
//     F += ((u_R+eta)^m - (u_L+eta)^m) / h                  [local kinds]
//     F += u_up * g_p where g_p = (p_lam(w_R)-p_lam(w_L))/h,
//          u_up donor cell w.r.t. the drift a_p = -g_p      [NonLocal]
//     F += -chi * u_up * gc where gc = 0.5*((grad c)_L + (grad c)_R),
//          u_up donor cell w.r.t. the drift a_c = chi * gc  [chi on]
//   u_new[q] = u[q] + (dt/h) * acc,  acc = sum over axes of
//              (+F at the right face if present) + (-F at the left face if present)

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kslab/convolve.hpp"
#include "kslab/core.hpp"
#include "kslab/field_io.hpp"
#include "kslab/metrics.hpp"
#include "kslab/potentials.hpp"
#include "kslab/pressure.hpp"

namespace kslab {

enum class SystemKind {
  Degenerate,  // Eq. (1.1)
  Regularized, // Eq. (1.7)
  EtaApprox,   // Eq. (2.1)
  NonLocal,    // Eq. (1.5)
};

inline const char* system_kind_name(SystemKind k) {
  switch (k) {
    case SystemKind::Degenerate: return "degenerate";
    case SystemKind::Regularized: return "regularized";
    case SystemKind::EtaApprox: return "eta_approx";
    case SystemKind::NonLocal: return "non_local";
  }
  return "?";
}

// Parameters that each kind forces.  Unused-but-set parameters are rejected
// rather than silently ignored.
inline std::vector<std::string> kind_param_errors(const SimParams& p, SystemKind kind) {
  std::vector<std::string> errs;
  auto need_zero = [&](double v, const char* name) {
    if (v != 0.0)
      errs.push_back(std::string(system_kind_name(kind)) + ": " + name +
                     " must be 0 for this system");
  };
  switch (kind) {
    case SystemKind::Degenerate:
      need_zero(p.sigma, "sigma");
      need_zero(p.eta, "eta");
      need_zero(p.lambda, "lambda");
      break;
    case SystemKind::Regularized:
      need_zero(p.eta, "eta");
      need_zero(p.lambda, "lambda");
      break;
    case SystemKind::EtaApprox:
      need_zero(p.lambda, "lambda");
      if (p.eta < 0.0) errs.push_back("eta_approx: eta must be >= 0");
      break;
    case SystemKind::NonLocal:
      if (!(p.eps_k > 0.0)) errs.push_back("non_local: eps_k must be > 0");
      if (!(p.eps_p > 0.0)) errs.push_back("non_local: eps_p must be > 0");
      if (!(p.lambda > 0.0)) errs.push_back("non_local: lambda must be > 0");
      need_zero(p.eta, "eta");
      break;
  }
  return errs;
}

struct SolverOptions {
  bool chi_on = true; // disable the chemotaxis term (oracle runs)
  double dt_max = std::numeric_limits<double>::infinity();
  double blowup_linf_factor = 1e6; // growth beyond this aborts as suspected blow-up
};

struct SolverState {
  double t = 0.0;
  ScalarField u;
  // caches, consistent with u (refreshed on construction and after each step)
  ScalarField c;      // chemical potential (zeros when chi is off)
  VectorField grad_c; // convolution-computed gradient, zeros when chi is off
  ScalarField w_p;    // V^{eps_p} * u   (NonLocal only)
  ScalarField w_k;    // V^{eps_k} * u   (NonLocal only)
};

// thrown by step() when the updated field stops being finite
class StepNanError : public std::runtime_error {
public:
  StepNanError(double t, const std::string& what) : std::runtime_error(what), t(t) {}
  double t;
};

class Solver {
public:
  Solver(const Grid& g, const SimParams& p, SystemKind kind, SolverOptions opt = {})
      : grid_(g), p_(p), kind_(kind), opt_(opt), checked_(validate_or_throw(g, p, kind)),
        plam_(p.m, kind == SystemKind::NonLocal ? p.lambda : 0.0) {
    if (opt_.chi_on) {
      phi_ = phi_kernel_spectrum(g);
      if (kind == SystemKind::NonLocal)
        gphi_ = grad_phi_mollified_spectra(g, p.eps_k);
      else
        gphi_ = grad_phi_kernel_spectra(g);
    }
    if (kind == SystemKind::NonLocal) {
      vp_ = mollifier_kernel_spectrum(g, p.eps_p);
      if (opt_.chi_on) vk_ = mollifier_kernel_spectrum(g, p.eps_k);
    }
  }

  const Grid& grid() const { return grid_; }
  const SimParams& params() const { return p_; }
  SystemKind kind() const { return kind_; }
  const SolverOptions& options() const { return opt_; }
  const PressureLaw& pressure() const { return plam_; }

  SolverState make_state(const ScalarField& u0, double t = 0.0) const {
    if (!(u0.grid == grid_)) throw std::invalid_argument("make_state: grid mismatch");
    SolverState s;
    s.t = t;
    s.u = u0;
    refresh(s);
    return s;
  }

  // CFL-stable step size: 0.4 * min(diffusion limit, advection limit)
  double stable_dt(const SolverState& s) const {
    check_state(s);
    const double h = grid_.h;
    double dmax = 0.0;
    if (kind_ == SystemKind::NonLocal) {
      for (std::size_t q = 0; q < s.u.v.size(); ++q)
        dmax = std::max(dmax, s.u.v[q] * plam_.prime(std::max(s.w_p.v[q], 0.0)));
    } else {
      double umax = 0.0;
      for (double v : s.u.v) umax = std::max(umax, v);
      dmax = p_.m * std::pow(umax + p_.eta, p_.m - 1.0);
    }
    double vmax = 0.0;
    if (opt_.chi_on) {
      for (int a = 0; a < grid_.d; ++a)
        for (double v : s.grad_c.comp[a]) vmax = std::max(vmax, std::fabs(p_.chi * v));
    }
    const double diff_den = 2.0 * grid_.d * (p_.sigma + dmax);
    const double dt1 = diff_den > 0.0 ? h * h / diff_den : std::numeric_limits<double>::infinity();
    const double dt2 = h / (2.0 * vmax + 1e-300);
    return 0.4 * std::min(dt1, dt2);
  }

  SolverState step(const SolverState& s, double dt) const {
    if (!(dt > 0.0)) throw std::invalid_argument("step: need dt > 0");
    if (dt > stable_dt(s) * (1.0 + 1e-12))
      throw std::invalid_argument("step: dt exceeds stable_dt (CFL violation)");
    SolverState out;
    out.t = s.t + dt;
    out.u = ScalarField(grid_);

    std::array<std::vector<double>, 3> F;
    for (int a = 0; a < grid_.d; ++a) {
      F[a].assign(grid_.size(), 0.0);
      assemble_axis_flux(s, a, F[a]);
    }

    const double h = grid_.h;
    const int n = grid_.n;
    auto cell_update = [&](std::size_t q, const int* idx) {
      double acc = 0.0;
      for (int a = 0; a < grid_.d; ++a) {
        const std::size_t st = grid_.stride(a);
        if (idx[a] < n - 1) acc += F[a][q];
        if (idx[a] > 0) acc -= F[a][q - st];
      }
      out.u.v[q] = s.u.v[q] + dt / h * acc;
    };
    if (grid_.d == 2) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const int idx2[2] = {i, j};
          cell_update(grid_.idx(i, j), idx2);
        }
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) {
            const int idx3[3] = {i, j, k};
            cell_update(grid_.idx(i, j, k), idx3);
          }
    }

    if (!all_finite(out.u))
      throw StepNanError(out.t, "step: non-finite values at t = " + format_g17(out.t));
    refresh(out);
    return out;
  }

  Trajectory solve(const ScalarField& u0, const std::vector<double>& snapshot_times) const {
    for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
      const double t = snapshot_times[i];
      if (t < 0.0 || t > p_.t_end * (1.0 + 1e-12))
        throw std::invalid_argument("solve: snapshot time outside [0, t_end]");
      if (i > 0 && !(t > snapshot_times[i - 1]))
        throw std::invalid_argument("solve: snapshot times must be strictly increasing");
    }

    Trajectory tr;
    tr.params = p_;
    tr.grid = grid_;

    SolverState s = make_state(u0);
    const double linf0 = lq_norm(u0, std::numeric_limits<double>::infinity());
    std::size_t next_snap = 0;
    if (next_snap < snapshot_times.size() && snapshot_times[next_snap] == 0.0) {
      tr.times.push_back(0.0);
      tr.snapshots.push_back(s.u);
      ++next_snap;
    }
    tr.diagnostics.push_back(diag_row(s, 0.0));

    while (s.t < p_.t_end) {
      const double target =
          next_snap < snapshot_times.size() ? snapshot_times[next_snap] : p_.t_end;
      double dt = std::min(stable_dt(s), opt_.dt_max);
      bool lands = false;
      if (s.t + dt >= target) {
        dt = target - s.t;
        lands = true;
      }
      SolverState next;
      try {
        next = step(s, dt);
      } catch (const StepNanError&) {
        tr.status = SolveStatus::SuspectedBlowup;
        tr.note = "non-finite field after t = " + format_g17(s.t);
        tr.times.push_back(s.t);
        tr.snapshots.push_back(s.u);
        return tr;
      }
      if (lands) next.t = target; // land exactly, no accumulation drift
      const double linf = lq_norm(next.u, std::numeric_limits<double>::infinity());
      if (linf0 > 0.0 && linf > opt_.blowup_linf_factor * linf0) {
        tr.status = SolveStatus::SuspectedBlowup;
        tr.note = "sup norm grew past " + format_g17(opt_.blowup_linf_factor) +
                  " times its initial value at t = " + format_g17(next.t);
        tr.times.push_back(s.t);
        tr.snapshots.push_back(s.u);
        return tr;
      }
      s = std::move(next);
      tr.diagnostics.push_back(diag_row(s, dt));
      if (lands && next_snap < snapshot_times.size() && target == snapshot_times[next_snap]) {
        tr.times.push_back(s.t);
        tr.snapshots.push_back(s.u);
        ++next_snap;
      }
    }
    return tr;
  }

private:
  void check_state(const SolverState& s) const {
    if (!(s.u.grid == grid_)) throw std::invalid_argument("state grid mismatch");
    if (kind_ == SystemKind::NonLocal && s.w_p.v.size() != s.u.v.size())
      throw std::invalid_argument("state caches missing; build states with make_state()");
    if (opt_.chi_on && (s.grad_c.grid.d != grid_.d || s.grad_c.comp[0].size() != s.u.v.size()))
      throw std::invalid_argument("state caches missing; build states with make_state()");
  }

  // runs before plam_ is built so configuration problems surface as one
  // aggregated invalid_argument instead of a PressureLaw domain_error
  static int validate_or_throw(const Grid& g, const SimParams& p, SystemKind kind) {
    auto errs = validate(p, g);
    auto kerrs = kind_param_errors(p, kind);
    errs.insert(errs.end(), kerrs.begin(), kerrs.end());
    if (kind == SystemKind::NonLocal) {
      auto rerrs = validate_kernel_resolution(p, g);
      errs.insert(errs.end(), rerrs.begin(), rerrs.end());
    }
    if (!errs.empty()) {
      std::string what = "Solver: invalid configuration:";
      for (const auto& e : errs) what += "\n  - " + e;
      throw std::invalid_argument(what);
    }
    return 0;
  }

  void refresh(SolverState& s) const {
    s.c = ScalarField(grid_);
    s.grad_c = VectorField(grid_);
    if (kind_ == SystemKind::NonLocal) {
      const FieldSpectrum fs = forward_field(s.u);
      s.w_p = convolve_spectrum(fs, vp_, grid_);
      if (opt_.chi_on) {
        s.w_k = convolve_spectrum(fs, vk_, grid_);
        for (int a = 0; a < grid_.d; ++a) {
          ScalarField gc = convolve_spectrum(fs, gphi_[a], grid_);
          s.grad_c.comp[a] = std::move(gc.v);
        }
        s.c = convolve_free_space(s.w_k, phi_);
      } else {
        s.w_k = ScalarField(grid_);
      }
    } else if (opt_.chi_on) {
      const FieldSpectrum fs = forward_field(s.u);
      s.c = convolve_spectrum(fs, phi_, grid_);
      for (int a = 0; a < grid_.d; ++a) {
        ScalarField gc = convolve_spectrum(fs, gphi_[a], grid_);
        s.grad_c.comp[a] = std::move(gc.v);
      }
    }
  }

  // face flux along `axis` stored at the left cell: F[q] lives between q and
  // q + stride(axis), defined for axis-index < n-1
  void assemble_axis_flux(const SolverState& s, int axis, std::vector<double>& F) const {
    const double h = grid_.h;
    const std::size_t st = grid_.stride(axis);
    const int n = grid_.n;
    const bool local = kind_ != SystemKind::NonLocal;
    const double chi = opt_.chi_on ? p_.chi : 0.0;

    auto face = [&](std::size_t q) {
      const double uL = s.u.v[q], uR = s.u.v[q + st];
      double Fq = p_.sigma * (uR - uL) / h;
      if (local) {
        Fq += (std::pow(uR + p_.eta, p_.m) - std::pow(uL + p_.eta, p_.m)) / h;
      } else {
        const double gp = (plam_(std::max(s.w_p.v[q + st], 0.0)) -
                           plam_(std::max(s.w_p.v[q], 0.0))) /
                          h;
        const double up = -gp > 0.0 ? uL : uR;
        Fq += up * gp;
      }
      if (chi != 0.0) {
        const double gc = 0.5 * (s.grad_c.comp[axis][q] + s.grad_c.comp[axis][q + st]);
        const double ac = chi * gc;
        const double uc = ac > 0.0 ? uL : uR;
        Fq += -ac * uc;
      }
      F[q] = Fq;
    };

    if (grid_.d == 2) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const int ia = axis == 0 ? i : j;
          if (ia < n - 1) face(grid_.idx(i, j));
        }
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) {
            const int ia = axis == 0 ? i : (axis == 1 ? j : k);
            if (ia < n - 1) face(grid_.idx(i, j, k));
          }
    }
  }

  DiagnosticsRow diag_row(const SolverState& s, double dt) const {
    DiagnosticsRow r;
    r.t = s.t;
    r.mass = mass(s.u);
    r.l1 = lq_norm(s.u, 1.0);
    r.l2 = lq_norm(s.u, 2.0);
    r.l2m = lq_norm(s.u, 2.0 * p_.m);
    r.linf = lq_norm(s.u, std::numeric_limits<double>::infinity());
    r.min = min_value(s.u);
    r.dt = dt;
    return r;
  }

  Grid grid_;
  SimParams p_;
  SystemKind kind_;
  SolverOptions opt_;
  int checked_; // declaration order matters: validation precedes plam_
  PressureLaw plam_;
  KernelSpectrum phi_;
  std::array<KernelSpectrum, 3> gphi_;
  KernelSpectrum vp_, vk_;
};

// ---------------------------------------------------------------------------
// free-function forms (convenience; they rebuild the kernel tables per call)

inline ScalarField make_initial_data(const ScalarField& u0, double sigma) {
  for (double v : u0.v)
    if (v < 0.0) throw std::domain_error("make_initial_data: u0 must be nonnegative");
  if (sigma < 0.0) throw std::domain_error("make_initial_data: sigma must be >= 0");
  const Grid& g = u0.grid;
  const double side = 2.0 * g.half_width;
  const double delta = std::clamp(std::sqrt(sigma), 2.0 * g.h, side / 8.0);
  ScalarField out = convolve_free_space(u0, mollifier_kernel_spectrum(g, delta));
  for (auto& v : out.v) v = std::max(v, 0.0); // clip convolution round-off
  return out;
}

inline double stable_dt(const SolverState& s, const SimParams& p, SystemKind kind,
                        SolverOptions opt = {}) {
  return Solver(s.u.grid, p, kind, opt).stable_dt(s);
}

inline SolverState step(const SolverState& s, const SimParams& p, SystemKind kind, double dt,
                        SolverOptions opt = {}) {
  return Solver(s.u.grid, p, kind, opt).step(s, dt);
}

inline Trajectory solve(const ScalarField& u0, const SimParams& p, SystemKind kind,
                        const std::vector<double>& snapshot_times, SolverOptions opt = {}) {
  return Solver(u0.grid, p, kind, opt).solve(u0, snapshot_times);
}

// ---------------------------------------------------------------------------
// discrete L^2 energy identity monitor (local kinds, chi on):
//   (1/2) d/dt ||u||_2^2 + sigma ||grad u||_2^2
//     + (4m/(m+1)^2) ||grad u^{(m+1)/2}||_2^2 - (1/2) ||u||_3^3  =  residual
// evaluated with the pre-step field for the dissipation terms and the Euler
// quotient for the time derivative.  First-order upwinding makes the residual
// O(h) rather than O(h^2); tests pin a measured envelope.
inline double energy_identity_residual(const SolverState& pre, const SolverState& post,
                                       const SimParams& p, double dt) {
  const double e_pre = 0.5 * std::pow(lq_norm(pre.u, 2.0), 2.0);
  const double e_post = 0.5 * std::pow(lq_norm(post.u, 2.0), 2.0);
  const double dedt = (e_post - e_pre) / dt;
  ScalarField upow(pre.u.grid);
  for (std::size_t q = 0; q < upow.v.size(); ++q)
    upow.v[q] = std::pow(std::max(pre.u.v[q], 0.0), 0.5 * (p.m + 1.0));
  const double visc = p.sigma * std::pow(h1_seminorm(pre.u), 2.0);
  const double pme = 4.0 * p.m / ((p.m + 1.0) * (p.m + 1.0)) * std::pow(h1_seminorm(upow), 2.0);
  const double birth = 0.5 * std::pow(lq_norm(pre.u, 3.0), 3.0);
  return dedt + visc + pme - birth;
}

} // namespace kslab

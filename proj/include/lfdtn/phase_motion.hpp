#pragma once

// Phase differences, phase-only correlation, phase addition and the velocity
// bottleneck (phase difference -> per-cell velocity -> plane-wave phase
// difference).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/fft.hpp"
#include "lfdtn/grid.hpp"
#include "lfdtn/spectra.hpp"

namespace lfdtn {

/// Per-cell velocity in pixels/frame (+x = increasing column, +y = increasing
/// row) and circular dispersion of the phase slopes in [0,1].
struct VelocityField {
  GridSpec grid;
  std::vector<double> vx, vy, var_x, var_y;
  std::vector<std::uint8_t> low_energy;

  VelocityField() = default;
  explicit VelocityField(const GridSpec& g)
      : grid(g), vx(g.L, 0.0), vy(g.L, 0.0), var_x(g.L, 0.0), var_y(g.L, 0.0), low_energy(g.L, 0) {}

  int rows() const noexcept { return grid.LU; }
  int cols() const noexcept { return grid.LV; }
};

/// Default per-bin guard on |X_t X_prev|.
inline constexpr double kDefaultEnergyEps = 1e-10;

inline PhaseDiffSet phase_diff(const LocalSpectra& Xt, const LocalSpectra& Xprev, double eps_energy = kDefaultEnergyEps) {
  if (!(Xt.grid == Xprev.grid)) throw ValidationError("phase_diff: grids differ");
  PhaseDiffSet pd(Xt.grid);
  for (std::size_t i = 0; i < pd.data.size(); ++i) {
    const cplx z = Xt.data[i] * std::conj(Xprev.data[i]);
    const double mag = std::abs(z);
    if (mag < eps_energy) {
      pd.data[i] = cplx(1.0, 0.0);
      pd.flagged[i] = 1;
    } else {
      pd.data[i] = z / mag;
    }
  }
  return pd;
}

/// Adjoint of phase_diff. Accumulates into grad_t and grad_prev (either may be null).
inline void phase_diff_backward(const LocalSpectra& Xt, const LocalSpectra& Xprev, const PhaseDiffSet& pd,
                                std::span<const cplx> grad_pd, LocalSpectra* grad_t, LocalSpectra* grad_prev) {
  for (std::size_t i = 0; i < pd.data.size(); ++i) {
    if (pd.flagged[i]) continue;
    const cplx z = Xt.data[i] * std::conj(Xprev.data[i]);
    const double mag = std::abs(z);
    const cplx p = pd.data[i];
    const double s = (grad_pd[i] * std::conj(p)).imag();
    const cplx gz = s * cplx(0.0, 1.0) * p / mag;
    if (grad_t) grad_t->data[i] += Xprev.data[i] * gz;
    if (grad_prev) grad_prev->data[i] += Xt.data[i] * std::conj(gz);
  }
}

struct PocResult {
  int drow = 0;
  int dcol = 0;
  double peak = 0.0;
};

/// Phase-only correlation of one Np x Np cell: location and height of the
/// correlation peak, shifts mapped into (-Np/2, Np/2].
inline PocResult poc(std::span<const cplx> pd_cell, int Np) {
  auto corr = ifft2(Np, pd_cell);
  std::size_t best = 0;
  for (std::size_t i = 1; i < corr.size(); ++i)
    if (corr[i].real() > corr[best].real()) best = i;
  auto signed_shift = [Np](int i) { return i > Np / 2 ? i - Np : i; };
  return {signed_shift(static_cast<int>(best) / Np), signed_shift(static_cast<int>(best) % Np), corr[best].real()};
}

inline LocalSpectra phase_add(const LocalSpectra& X, const PhaseDiffSet& pd) {
  if (!(X.grid == pd.grid)) throw ValidationError("phase_add: grids differ");
  LocalSpectra out(X.grid);
  for (std::size_t i = 0; i < X.data.size(); ++i) out.data[i] = X.data[i] * pd.data[i];
  return out;
}

inline void phase_add_backward(const LocalSpectra& X, const PhaseDiffSet& pd, const LocalSpectra& grad_out,
                               LocalSpectra* grad_x, std::vector<cplx>* grad_pd) {
  for (std::size_t i = 0; i < X.data.size(); ++i) {
    if (grad_x) grad_x->data[i] += std::conj(pd.data[i]) * grad_out.data[i];
    if (grad_pd) (*grad_pd)[i] += std::conj(X.data[i]) * grad_out.data[i];
  }
}

/// Centered frequency-index offsets. rx varies along columns, ry along rows;
/// both are zero at index Np/2 (integer division), so even sizes run
/// -Np/2 .. Np/2-1.
struct TemplateMatrix {
  int Np = 0;
  std::vector<int> rx, ry;

  int center() const noexcept { return Np / 2; }
  /// Canonical (DC-at-origin) bin index of centered position (i, j).
  std::size_t canonical(int i, int j) const noexcept {
    const int fi = ((i - center()) % Np + Np) % Np;
    const int fj = ((j - center()) % Np + Np) % Np;
    return static_cast<std::size_t>(fi) * Np + fj;
  }
};

inline TemplateMatrix make_template_matrix(int Np) {
  if (Np < 2) throw ValidationError("build_template_matrix: Np must be >= 2");
  TemplateMatrix t;
  t.Np = Np;
  t.rx.resize(static_cast<std::size_t>(Np) * Np);
  t.ry.resize(t.rx.size());
  for (int i = 0; i < Np; ++i)
    for (int j = 0; j < Np; ++j) {
      t.rx[static_cast<std::size_t>(i) * Np + j] = j - Np / 2;
      t.ry[static_cast<std::size_t>(i) * Np + j] = i - Np / 2;
    }
  return t;
}

/// Cached template for a given Np; safe to call from several threads.
inline std::shared_ptr<const TemplateMatrix> build_template_matrix(int Np) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const TemplateMatrix>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[Np];
  if (!slot) slot = std::make_shared<const TemplateMatrix>(make_template_matrix(Np));
  return slot;
}

/// Per-bin magnitudes |X|, the default bin energies for extract_velocity.
inline std::vector<double> bin_energies(const LocalSpectra& X) {
  std::vector<double> e(X.data.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::abs(X.data[i]);
  return e;
}

inline void bin_energies_backward(const LocalSpectra& X, std::span<const double> grad_e, LocalSpectra& grad_x) {
  for (std::size_t i = 0; i < X.data.size(); ++i) {
    const double a = std::abs(X.data[i]);
    if (a > 0.0) grad_x.data[i] += grad_e[i] * X.data[i] / a;
  }
}

namespace detail {

/// Visits every adjacent-bin pair of a cell in the centered layout, skipping
/// the wrap-around seam. f(first, second, axis) with axis 0 = x, 1 = y.
template <class F>
void for_each_slope_pair(const TemplateMatrix& t, F&& f) {
  const int Np = t.Np;
  for (int i = 0; i < Np; ++i)
    for (int j = 0; j + 1 < Np; ++j) f(t.canonical(i, j), t.canonical(i, j + 1), 0);
  for (int i = 0; i + 1 < Np; ++i)
    for (int j = 0; j < Np; ++j) f(t.canonical(i, j), t.canonical(i + 1, j), 1);
}

inline double pair_weight(std::span<const double> e, std::span<const std::uint8_t> flags, std::size_t a,
                          std::size_t b) {
  if (flags[a] || flags[b]) return 0.0;
  return std::sqrt(e[a] * e[b]);
}

}  // namespace detail

/// Energy-weighted mean phase slope per cell, converted to pixels/frame.
inline VelocityField extract_velocity(const PhaseDiffSet& pd, std::span<const double> energies) {
  const GridSpec& g = pd.grid;
  if (energies.size() != pd.data.size()) throw ValidationError("extract_velocity: energy shape mismatch");
  const auto tm = build_template_matrix(g.Np);
  const std::size_t bins = g.cell_bins();
  VelocityField vf(g);
  for (int l = 0; l < g.L; ++l) {
    auto p = pd.cell(l);
    auto e = energies.subspan(l * bins, bins);
    auto fl = pd.cell_flags(l);
    cplx M[2] = {};
    double S[2] = {0.0, 0.0};
    detail::for_each_slope_pair(*tm, [&](std::size_t a, std::size_t b, int ax) {
      const double w = detail::pair_weight(e, fl, a, b);
      if (w == 0.0) return;
      M[ax] += w * p[b] * std::conj(p[a]);
      S[ax] += w;
    });
    if (!(S[0] > 0.0) || !(S[1] > 0.0)) {
      vf.var_x[l] = vf.var_y[l] = 1.0;
      vf.low_energy[l] = 1;
      continue;
    }
    const double k = -g.Np / (2.0 * std::numbers::pi);
    M[0] /= S[0];
    M[1] /= S[1];
    vf.vx[l] = k * std::arg(M[0]);
    vf.vy[l] = k * std::arg(M[1]);
    vf.var_x[l] = std::clamp(1.0 - std::abs(M[0]), 0.0, 1.0);
    vf.var_y[l] = std::clamp(1.0 - std::abs(M[1]), 0.0, 1.0);
  }
  return vf;
}

/// Gradient with respect to a VelocityField's four channels.
struct VelocityGrad {
  std::vector<double> vx, vy, var_x, var_y;
  VelocityGrad() = default;
  explicit VelocityGrad(int L) : vx(L, 0.0), vy(L, 0.0), var_x(L, 0.0), var_y(L, 0.0) {}
};

/// Adjoint of extract_velocity. Accumulates into grad_pd and grad_energies.
inline void extract_velocity_backward(const PhaseDiffSet& pd, std::span<const double> energies,
                                      const VelocityField& vf, const VelocityGrad& gv, std::span<cplx> grad_pd,
                                      std::span<double> grad_energies) {
  const GridSpec& g = pd.grid;
  const auto tm = build_template_matrix(g.Np);
  const std::size_t bins = g.cell_bins();
  const double k = -g.Np / (2.0 * std::numbers::pi);
  for (int l = 0; l < g.L; ++l) {
    if (vf.low_energy[l]) continue;
    auto p = pd.cell(l);
    auto e = energies.subspan(l * bins, bins);
    auto fl = pd.cell_flags(l);
    cplx M[2] = {};
    double S[2] = {0.0, 0.0};
    detail::for_each_slope_pair(*tm, [&](std::size_t a, std::size_t b, int ax) {
      const double w = detail::pair_weight(e, fl, a, b);
      if (w == 0.0) return;
      M[ax] += w * p[b] * std::conj(p[a]);
      S[ax] += w;
    });
    cplx gM[2];
    const double gvel[2] = {gv.vx[l], gv.vy[l]};
    const double gvar[2] = {gv.var_x[l], gv.var_y[l]};
    for (int ax = 0; ax < 2; ++ax) {
      M[ax] /= S[ax];
      const double mag = std::abs(M[ax]);
      if (mag == 0.0) {
        gM[ax] = 0.0;
        continue;
      }
      const double g_theta = k * gvel[ax];
      const double g_mag = -gvar[ax];
      gM[ax] = g_theta * cplx(0.0, 1.0) * M[ax] / (mag * mag) + g_mag * M[ax] / mag;
    }
    auto gp = grad_pd.subspan(l * bins, bins);
    auto ge = grad_energies.subspan(l * bins, bins);
    detail::for_each_slope_pair(*tm, [&](std::size_t a, std::size_t b, int ax) {
      const double w = detail::pair_weight(e, fl, a, b);
      if (w == 0.0) return;
      const cplx d = p[b] * std::conj(p[a]);
      const cplx gd = (w / S[ax]) * gM[ax];
      gp[b] += p[a] * gd;
      gp[a] += p[b] * std::conj(gd);
      const double gw = (std::conj(gM[ax]) * (d - M[ax])).real() / S[ax];
      ge[a] += gw * e[b] / (2.0 * w);
      ge[b] += gw * e[a] / (2.0 * w);
    });
  }
}

/// Plane-wave phase difference realizing each cell's velocity. Velocities
/// beyond Np/2 are saturated; the count is written to *saturated.
inline PhaseDiffSet velocity_to_pd(const VelocityField& vf, int* saturated = nullptr) {
  const GridSpec& g = vf.grid;
  const auto tm = build_template_matrix(g.Np);
  const double lim = g.Np / 2.0;
  const double k = 2.0 * std::numbers::pi / g.Np;
  PhaseDiffSet pd(g);
  int sat = 0;
  for (int l = 0; l < g.L; ++l) {
    double vx = vf.vx[l], vy = vf.vy[l];
    if (std::abs(vx) > lim || std::abs(vy) > lim) ++sat;
    vx = std::clamp(vx, -lim, lim);
    vy = std::clamp(vy, -lim, lim);
    auto c = pd.cell(l);
    for (int i = 0; i < g.Np; ++i)
      for (int j = 0; j < g.Np; ++j) {
        const std::size_t q = static_cast<std::size_t>(i) * g.Np + j;
        const double phase = -k * (vx * tm->rx[q] + vy * tm->ry[q]);
        c[tm->canonical(i, j)] = std::polar(1.0, phase);
      }
  }
  if (saturated) *saturated = sat;
  return pd;
}

/// Adjoint of velocity_to_pd; returns gradients on (vx, vy) per cell.
inline void velocity_to_pd_backward(const VelocityField& vf, const PhaseDiffSet& pd, std::span<const cplx> grad_pd,
                                    std::vector<double>& gvx, std::vector<double>& gvy) {
  const GridSpec& g = vf.grid;
  const auto tm = build_template_matrix(g.Np);
  const double lim = g.Np / 2.0;
  const double k = 2.0 * std::numbers::pi / g.Np;
  gvx.assign(g.L, 0.0);
  gvy.assign(g.L, 0.0);
  const std::size_t bins = g.cell_bins();
  for (int l = 0; l < g.L; ++l) {
    double ax = 0.0, ay = 0.0;
    for (int i = 0; i < g.Np; ++i)
      for (int j = 0; j < g.Np; ++j) {
        const std::size_t q = static_cast<std::size_t>(i) * g.Np + j;
        const std::size_t b = l * bins + tm->canonical(i, j);
        const double s = (std::conj(grad_pd[b]) * pd.data[b]).imag();
        ax += k * tm->rx[q] * s;
        ay += k * tm->ry[q] * s;
      }
    gvx[l] = std::abs(vf.vx[l]) > lim ? 0.0 : ax;
    gvy[l] = std::abs(vf.vy[l]) > lim ? 0.0 : ay;
  }
}

}  // namespace lfdtn

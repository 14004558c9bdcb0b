#pragma once

// Local Fourier Transform: windowed, zero-padded FFTs of overlapping cells,
// plus the two overlap-add inverses and the adjoints used for training.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/fft.hpp"
#include "lfdtn/grid.hpp"
#include "lfdtn/plane.hpp"
#include "lfdtn/spectra.hpp"
#include "lfdtn/window.hpp"

namespace lfdtn {

namespace detail {

inline void check_image(const Image& x, const GridSpec& g, const char* who) {
  if (x.rows() != g.U || x.cols() != g.V)
    throw ValidationError(std::string(who) + ": image is " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + ", grid expects " + std::to_string(g.U) + "x" +
                          std::to_string(g.V));
}

inline void check_window(const Window& w, const GridSpec& g, const char* who) {
  if (w.N != g.N)
    throw ValidationError(std::string(who) + ": window size " + std::to_string(w.N) + " != grid N " +
                          std::to_string(g.N));
}

/// FFT of the window zero-padded by P on every side.
inline std::vector<cplx> padded_window_spectrum(const Window& w, int P) {
  const int Np = w.N + 2 * P;
  std::vector<cplx> buf(static_cast<std::size_t>(Np) * Np);
  for (int n = 0; n < w.N; ++n)
    for (int m = 0; m < w.N; ++m) buf[static_cast<std::size_t>(n + P) * Np + (m + P)] = w(n, m);
  return fft2(Np, buf);
}

}  // namespace detail

inline LocalSpectra lft(const Image& x, const GridSpec& g, const Window& w) {
  detail::check_image(x, g, "lft");
  detail::check_window(w, g, "lft");
  LocalSpectra out(g);
  const int Np = g.Np;
  std::vector<cplx> buf(static_cast<std::size_t>(Np) * Np);
  for (int u = 0; u < g.LU; ++u) {
    for (int v = 0; v < g.LV; ++v) {
      std::fill(buf.begin(), buf.end(), cplx{});
      const int r0 = u * g.H - g.image_pad;
      const int c0 = v * g.H - g.image_pad;
      for (int n = 0; n < g.N; ++n) {
        const int r = r0 + n;
        if (r < 0 || r >= g.U) continue;
        for (int m = 0; m < g.N; ++m) {
          const int c = c0 + m;
          if (c < 0 || c >= g.V) continue;
          buf[static_cast<std::size_t>(n + g.P) * Np + (m + g.P)] = x(r, c) * w(n, m);
        }
      }
      fft2(Np, buf, out.cell(g.cell_index(u, v)));
    }
  }
  return out;
}

inline LocalSpectra lft(const Frame& f, const GridSpec& g, const Window& w) { return lft(to_image(f), g, w); }

/// Adjoint of lft: maps a gradient on the spectra to a gradient on the image.
inline Image lft_backward(const LocalSpectra& grad, const Window& w) {
  const GridSpec& g = grad.grid;
  Image gx(g.U, g.V, 0.0);
  const int Np = g.Np;
  const double scale = static_cast<double>(Np) * Np;
  std::vector<cplx> buf(static_cast<std::size_t>(Np) * Np);
  for (int u = 0; u < g.LU; ++u) {
    for (int v = 0; v < g.LV; ++v) {
      ifft2(Np, grad.cell(g.cell_index(u, v)), buf);
      const int r0 = u * g.H - g.image_pad;
      const int c0 = v * g.H - g.image_pad;
      for (int n = 0; n < g.N; ++n) {
        const int r = r0 + n;
        if (r < 0 || r >= g.U) continue;
        for (int m = 0; m < g.N; ++m) {
          const int c = c0 + m;
          if (c < 0 || c >= g.V) continue;
          gx(r, c) += scale * buf[static_cast<std::size_t>(n + g.P) * Np + (m + g.P)].real() * w(n, m);
        }
      }
    }
  }
  return gx;
}

/// Exact inverse of lft by weighted overlap-add (numerator w, denominator w^2).
inline Image ilft(const LocalSpectra& X, const Window& w, double eps = 1e-8) {
  const GridSpec& g = X.grid;
  detail::check_window(w, g, "ilft");
  const int Np = g.Np;
  Image num(g.padded_rows(), g.padded_cols(), 0.0);
  Image den(g.padded_rows(), g.padded_cols(), 0.0);
  std::vector<cplx> buf(static_cast<std::size_t>(Np) * Np);
  for (int u = 0; u < g.LU; ++u) {
    for (int v = 0; v < g.LV; ++v) {
      ifft2(Np, X.cell(g.cell_index(u, v)), buf);
      for (int n = 0; n < g.N; ++n) {
        for (int m = 0; m < g.N; ++m) {
          const double wt = w(n, m);
          num(u * g.H + n, v * g.H + m) += buf[static_cast<std::size_t>(n + g.P) * Np + (m + g.P)].real() * wt;
          den(u * g.H + n, v * g.H + m) += wt * wt;
        }
      }
    }
  }
  Image out(g.U, g.V);
  for (int r = 0; r < g.U; ++r) {
    for (int c = 0; c < g.V; ++c) {
      const double d = den(r + g.image_pad, c + g.image_pad);
      if (d < eps)
        throw NumericalError("ilft: NOLA violated at pixel (" + std::to_string(r) + "," + std::to_string(c) +
                             "), denominator " + std::to_string(d));
      out(r, c) = num(r + g.image_pad, c + g.image_pad) / d;
    }
  }
  return out;
}

struct MIlftOptions {
  double eps = 1e-8;
  /// When set, any in-support pixel whose shifted denominator drops below eps
  /// is an error. Otherwise such pixels are floored at eps and only pixels
  /// where the unshifted denominator also fails raise an error.
  bool strict = false;
};

/// Forward intermediates of m_ilft needed by its adjoint.
struct MIlftTape {
  int canvas_rows = 0, canvas_cols = 0;
  std::vector<double> xhat;      // L * Np^2, real part of iFFT(spectra)
  std::vector<double> what;      // L * Np^2, shifted window after clamp
  std::vector<std::uint8_t> active;  // L * Np^2, pre-clamp value > 0
  std::vector<double> num, den;  // canvas
  std::vector<cplx> window_spectrum;
  int floored_pixels = 0;
};

/// Modified inverse LFT: each cell's synthesis window is shifted by that
/// cell's phase difference before overlap-add.
inline Image m_ilft(const LocalSpectra& X, const Window& w, const PhaseDiffSet& pd, const MIlftOptions& opt = {},
                    MIlftTape* tape = nullptr) {
  const GridSpec& g = X.grid;
  detail::check_window(w, g, "m_ilft");
  if (!(pd.grid == g)) throw ValidationError("m_ilft: phase-difference grid does not match spectra grid");
  const int Np = g.Np;
  const std::size_t bins = static_cast<std::size_t>(Np) * Np;
  const int CR = g.padded_rows() + 2 * g.P;
  const int CC = g.padded_cols() + 2 * g.P;

  MIlftTape local;
  MIlftTape& t = tape ? *tape : local;
  t.canvas_rows = CR;
  t.canvas_cols = CC;
  t.window_spectrum = detail::padded_window_spectrum(w, g.P);
  t.xhat.assign(g.L * bins, 0.0);
  t.what.assign(g.L * bins, 0.0);
  t.active.assign(g.L * bins, 0);
  t.num.assign(static_cast<std::size_t>(CR) * CC, 0.0);
  t.den.assign(static_cast<std::size_t>(CR) * CC, 0.0);
  t.floored_pixels = 0;
  std::vector<double> ideal(static_cast<std::size_t>(CR) * CC, 0.0);

  std::vector<cplx> buf(bins), prod(bins);
  for (int u = 0; u < g.LU; ++u) {
    for (int v = 0; v < g.LV; ++v) {
      const int l = g.cell_index(u, v);
      const std::size_t off = static_cast<std::size_t>(l) * bins;
      ifft2(Np, X.cell(l), buf);
      for (std::size_t i = 0; i < bins; ++i) t.xhat[off + i] = buf[i].real();
      auto pdc = pd.cell(l);
      for (std::size_t i = 0; i < bins; ++i) prod[i] = t.window_spectrum[i] * pdc[i];
      ifft2(Np, prod, buf);
      for (std::size_t i = 0; i < bins; ++i) {
        const double pre = buf[i].real();
        t.active[off + i] = pre > 0.0;
        t.what[off + i] = pre > 0.0 ? pre : 0.0;
      }
      for (int i = 0; i < Np; ++i) {
        for (int j = 0; j < Np; ++j) {
          const std::size_t q = static_cast<std::size_t>(i) * Np + j;
          const std::size_t p = static_cast<std::size_t>(u * g.H + i) * CC + (v * g.H + j);
          const double wh = t.what[off + q];
          t.num[p] += t.xhat[off + q] * wh;
          t.den[p] += wh * wh;
          const int n = i - g.P, m = j - g.P;
          if (n >= 0 && n < g.N && m >= 0 && m < g.N) ideal[p] += w(n, m) * w(n, m);
        }
      }
    }
  }

  Image out(g.U, g.V);
  const int off = g.image_pad + g.P;
  int bad_r0 = g.U, bad_r1 = -1, bad_c0 = g.V, bad_c1 = -1;
  for (int r = 0; r < g.U; ++r) {
    for (int c = 0; c < g.V; ++c) {
      const std::size_t p = static_cast<std::size_t>(r + off) * CC + (c + off);
      double d = t.den[p];
      if (d < opt.eps) {
        if (opt.strict || ideal[p] < opt.eps) {
          bad_r0 = std::min(bad_r0, r);
          bad_r1 = std::max(bad_r1, r);
          bad_c0 = std::min(bad_c0, c);
          bad_c1 = std::max(bad_c1, c);
        }
        ++t.floored_pixels;
        d = opt.eps;
      }
      out(r, c) = t.num[p] / d;
    }
  }
  if (bad_r1 >= 0)
    throw NumericalError("m_ilft: NOLA violated in rows " + std::to_string(bad_r0) + "-" + std::to_string(bad_r1) +
                         ", cols " + std::to_string(bad_c0) + "-" + std::to_string(bad_c1));
  return out;
}

struct MIlftGrad {
  LocalSpectra spectra;
  std::vector<cplx> pd;  // same layout as PhaseDiffSet::data
};

/// Adjoint of m_ilft given its tape and the gradient on the output image.
inline MIlftGrad m_ilft_backward(const MIlftTape& t, const GridSpec& g, const Image& grad_out,
                                 const MIlftOptions& opt = {}) {
  const int Np = g.Np;
  const std::size_t bins = static_cast<std::size_t>(Np) * Np;
  const int CC = t.canvas_cols;
  std::vector<double> g_num(t.num.size(), 0.0), g_den(t.num.size(), 0.0);
  const int off = g.image_pad + g.P;
  for (int r = 0; r < g.U; ++r) {
    for (int c = 0; c < g.V; ++c) {
      const std::size_t p = static_cast<std::size_t>(r + off) * CC + (c + off);
      const double gy = grad_out(r, c);
      const double d = t.den[p];
      if (d < opt.eps) {
        g_num[p] = gy / opt.eps;
      } else {
        g_num[p] = gy / d;
        g_den[p] = -gy * t.num[p] / (d * d);
      }
    }
  }

  MIlftGrad out{LocalSpectra(g), std::vector<cplx>(static_cast<std::size_t>(g.L) * bins)};
  std::vector<cplx> gx(bins), gw(bins), tmp(bins);
  const double inv = 1.0 / static_cast<double>(bins);
  for (int u = 0; u < g.LU; ++u) {
    for (int v = 0; v < g.LV; ++v) {
      const int l = g.cell_index(u, v);
      const std::size_t coff = static_cast<std::size_t>(l) * bins;
      for (int i = 0; i < Np; ++i) {
        for (int j = 0; j < Np; ++j) {
          const std::size_t q = static_cast<std::size_t>(i) * Np + j;
          const std::size_t p = static_cast<std::size_t>(u * g.H + i) * CC + (v * g.H + j);
          const double wh = t.what[coff + q];
          gx[q] = g_num[p] * wh;
          const double gwh = g_num[p] * t.xhat[coff + q] + 2.0 * wh * g_den[p];
          gw[q] = t.active[coff + q] ? gwh : 0.0;
        }
      }
      fft2(Np, gx, tmp);
      auto gs = out.spectra.cell(l);
      for (std::size_t i = 0; i < bins; ++i) gs[i] = tmp[i] * inv;
      fft2(Np, gw, tmp);
      for (std::size_t i = 0; i < bins; ++i) out.pd[coff + i] = std::conj(t.window_spectrum[i]) * tmp[i] * inv;
    }
  }
  return out;
}

}  // namespace lfdtn

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/plane.hpp"

namespace lfdtn {

inline constexpr double kPsnrCap = 99.0;

struct Metrics {
  double l1 = 0.0, mse = 0.0, dssim = 0.0, bce = 0.0, psnr = kPsnrCap;
};

namespace detail {

inline constexpr int kSsimWin = 11;

inline const std::array<double, kSsimWin * kSsimWin>& ssim_kernel() {
  static const auto k = [] {
    std::array<double, kSsimWin * kSsimWin> out{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kSsimWin; ++i)
      for (int j = 0; j < kSsimWin; ++j) {
        const double di = i - 5, dj = j - 5;
        out[i * kSsimWin + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
        sum += out[i * kSsimWin + j];
      }
    for (auto& v : out) v /= sum;
    return out;
  }();
  return k;
}

}  // namespace detail

/// Mean SSIM over all valid 11x11 Gaussian-window positions (sigma 1.5,
/// K1 0.01, K2 0.03, dynamic range 1). If grad_x is given it receives
/// d(mean SSIM)/d(x).
inline double ssim(const Image& x, const Image& y, Image* grad_x = nullptr) {
  if (!x.same_shape(y)) throw ValidationError("ssim: shape mismatch");
  constexpr int W = detail::kSsimWin;
  if (x.rows() < W || x.cols() < W) throw ValidationError("ssim: image smaller than 11x11 window");
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const auto& k = detail::ssim_kernel();
  const int PR = x.rows() - W + 1, PC = x.cols() - W + 1;
  const double npos = static_cast<double>(PR) * PC;
  double total = 0.0;
  // d S / d(mu_x), d S / d(E[x^2]), d S / d(E[xy]) per position.
  std::vector<double> dmu, dxx, dxy;
  if (grad_x) {
    dmu.resize(static_cast<std::size_t>(PR) * PC);
    dxx.resize(dmu.size());
    dxy.resize(dmu.size());
  }
  for (int i = 0; i < PR; ++i) {
    for (int j = 0; j < PC; ++j) {
      double mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
      for (int a = 0; a < W; ++a)
        for (int b = 0; b < W; ++b) {
          const double g = k[a * W + b];
          const double xv = x(i + a, j + b), yv = y(i + a, j + b);
          mx += g * xv;
          my += g * yv;
          exx += g * xv * xv;
          eyy += g * yv * yv;
          exy += g * xv * yv;
        }
      const double sx = exx - mx * mx, sy = eyy - my * my, sxy = exy - mx * my;
      const double A1 = 2 * mx * my + C1, A2 = 2 * sxy + C2;
      const double B1 = mx * mx + my * my + C1, B2 = sx + sy + C2;
      const double S = (A1 * A2) / (B1 * B2);
      total += S;
      if (grad_x) {
        const std::size_t p = static_cast<std::size_t>(i) * PC + j;
        dmu[p] = S * (2 * my / A1 - 2 * my / A2 - 2 * mx / B1 + 2 * mx / B2);
        dxx[p] = -S / B2;
        dxy[p] = 2 * S / A2;
      }
    }
  }
  if (grad_x) {
    *grad_x = Image(x.rows(), x.cols(), 0.0);
    for (int i = 0; i < PR; ++i)
      for (int j = 0; j < PC; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * PC + j;
        for (int a = 0; a < W; ++a)
          for (int b = 0; b < W; ++b) {
            const double g = k[a * W + b] / npos;
            (*grad_x)(i + a, j + b) += g * (dmu[p] + 2 * x(i + a, j + b) * dxx[p] + y(i + a, j + b) * dxy[p]);
          }
      }
  }
  return total / npos;
}

inline double dssim(const Image& x, const Image& y, Image* grad_x = nullptr) {
  const double s = ssim(x, y, grad_x);
  if (grad_x)
    for (auto& v : grad_x->vec()) v *= -0.5;
  return (1.0 - s) / 2.0;
}

inline double mse(const Image& x, const Image& y, Image* grad_x = nullptr) {
  if (!x.same_shape(y)) throw ValidationError("mse: shape mismatch");
  double s = 0.0;
  if (grad_x) *grad_x = Image(x.rows(), x.cols(), 0.0);
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
    if (grad_x) (*grad_x)[i] = 2.0 * d / n;
  }
  return s / n;
}

inline Metrics compute_metrics(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt)) throw ValidationError("compute_metrics: shape mismatch");
  Metrics m;
  const double n = static_cast<double>(pred.size());
  double l1 = 0.0, bce = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    l1 += std::abs(pred[i] - gt[i]);
    const double p = std::clamp(pred[i], 1e-7, 1.0 - 1e-7);
    bce -= gt[i] * std::log(p) + (1.0 - gt[i]) * std::log(1.0 - p);
  }
  m.l1 = l1 / n;
  m.bce = bce / n;
  m.mse = mse(pred, gt);
  m.dssim = std::clamp(dssim(pred, gt), 0.0, 1.0);
  m.psnr = m.mse > 0.0 ? std::min(kPsnrCap, -10.0 * std::log10(m.mse)) : kPsnrCap;
  return m;
}

inline Metrics compute_metrics(const Frame& pred, const Frame& gt) { return compute_metrics(to_image(pred), to_image(gt)); }

}  // namespace lfdtn

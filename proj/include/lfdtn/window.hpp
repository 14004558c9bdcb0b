#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "lfdtn/error.hpp"

namespace lfdtn {

enum class WindowKind { rectangular, gaussian, confined_gaussian };

inline std::string_view to_string(WindowKind k) {
  switch (k) {
    case WindowKind::rectangular: return "rectangular";
    case WindowKind::gaussian: return "gaussian";
    case WindowKind::confined_gaussian: return "confined_gaussian";
  }
  return "?";
}

inline WindowKind parse_window_kind(std::string_view s) {
  if (s == "rectangular" || s == "rect") return WindowKind::rectangular;
  if (s == "gaussian") return WindowKind::gaussian;
  if (s == "confined_gaussian" || s == "confined") return WindowKind::confined_gaussian;
  throw ValidationError("unknown window kind '" + std::string(s) + "'");
}

/// Separable N x N taper, peak-normalized to 1.
struct Window {
  int N = 0;
  WindowKind kind = WindowKind::rectangular;
  double sigma_t = 0.0;
  std::vector<double> taps1d;  // length N
  std::vector<double> taps;    // N*N, row-major outer product

  double operator()(int n, int m) const noexcept { return taps[static_cast<std::size_t>(n) * N + m]; }
};

namespace detail {

inline std::vector<double> window_1d(WindowKind kind, int N, double sigma_t) {
  std::vector<double> w(N, 1.0);
  if (kind == WindowKind::rectangular) return w;

  const double c = (N - 1) / 2.0;
  const double s = sigma_t * N;
  auto gauss = [&](double x) {
    const double z = (x - c) / s;
    return std::exp(-0.5 * z * z);
  };
  if (kind == WindowKind::gaussian) {
    for (int n = 0; n < N; ++n) w[n] = gauss(n);
  } else {
    // Approximate confined Gaussian: subtract shifted copies so the taper
    // vanishes half a sample beyond either end.
    const double L = N;
    const double scale = gauss(-0.5) / (gauss(-0.5 + L) + gauss(-0.5 - L));
    for (int n = 0; n < N; ++n) w[n] = gauss(n) - scale * (gauss(n + L) + gauss(n - L));
  }
  const double peak = *std::max_element(w.begin(), w.end());
  for (auto& v : w) v /= peak;
  return w;
}

}  // namespace detail

inline Window make_window(WindowKind kind, int N, double sigma_t = 0.0) {
  if (N < 2) throw ValidationError("make_window: N must be >= 2");
  if (kind != WindowKind::rectangular && !(sigma_t > 0.0))
    throw ValidationError("make_window: sigma_t must be > 0 for Gaussian windows");
  Window w;
  w.N = N;
  w.kind = kind;
  w.sigma_t = sigma_t;
  w.taps1d = detail::window_1d(kind, N, sigma_t);
  w.taps.resize(static_cast<std::size_t>(N) * N);
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < N; ++m) w.taps[static_cast<std::size_t>(n) * N + m] = w.taps1d[n] * w.taps1d[m];
  return w;
}

/// Builds a window from explicit 2-D taps (used for constructed edge cases).
inline Window make_custom_window(int N, std::vector<double> taps) {
  if (taps.size() != static_cast<std::size_t>(N) * N) throw ValidationError("make_custom_window: tap count");
  Window w;
  w.N = N;
  w.taps = std::move(taps);
  w.taps1d.assign(N, 0.0);
  return w;
}

struct NolaReport {
  bool ok = false;
  double min_denominator = 0.0;
};

/// Steady-state overlap-add denominator sum_{u,v} w^(a+1)[n - uH, m - vH],
/// evaluated over one stride period.
inline NolaReport check_nola(const Window& w, int H, int a = 1, double eps = 1e-8) {
  if (H < 1 || H > w.N) throw ValidationError("check_nola: need 1 <= H <= N");
  double mn = std::numeric_limits<double>::infinity();
  for (int n = 0; n < H; ++n) {
    for (int m = 0; m < H; ++m) {
      double d = 0.0;
      for (int i = n; i < w.N; i += H)
        for (int j = m; j < w.N; j += H) d += std::pow(w(i, j), a + 1);
      mn = std::min(mn, d);
    }
  }
  return {mn >= eps, mn};
}

}  // namespace lfdtn

#pragma once

// Thin wrapper over FFTW for the square complex transforms used by the
// local Fourier machinery. Plans are created once per (size, direction)
// and shared; execution goes through the new-array interface, which FFTW
// documents as thread-safe.

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

namespace lfdtn {

using cplx = std::complex<double>;

namespace detail {

class FftPlanCache {
public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cplx> in(static_cast<std::size_t>(n) * n), out(in.size());
    fftw_plan p = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(in.data()),
                                   reinterpret_cast<fftw_complex*>(out.data()), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mu_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

inline void run_plan(int n, int sign, std::span<const cplx> in, std::span<cplx> out) {
  fftw_plan p = FftPlanCache::instance().get(n, sign);
  if (in.data() == out.data()) {
    std::vector<cplx> tmp(in.begin(), in.end());
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return;
  }
  // FFTW never writes to the input of an out-of-place complex DFT.
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace detail

/// Unnormalized forward 2-D DFT of an n x n row-major grid.
inline void fft2(int n, std::span<const cplx> in, std::span<cplx> out) {
  detail::run_plan(n, FFTW_FORWARD, in, out);
}

/// Inverse 2-D DFT including the 1/n^2 factor.
inline void ifft2(int n, std::span<const cplx> in, std::span<cplx> out) {
  detail::run_plan(n, FFTW_BACKWARD, in, out);
  const double s = 1.0 / (static_cast<double>(n) * n);
  for (auto& v : out) v *= s;
}

inline std::vector<cplx> fft2(int n, std::span<const cplx> in) {
  std::vector<cplx> out(in.size());
  fft2(n, in, out);
  return out;
}

inline std::vector<cplx> ifft2(int n, std::span<const cplx> in) {
  std::vector<cplx> out(in.size());
  ifft2(n, in, out);
  return out;
}

}  // namespace lfdtn

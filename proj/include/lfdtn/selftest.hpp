#pragma once

// Fast invariant checks run by `lfdtn selftest`.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lfdtn/evaluate.hpp"
#include "lfdtn/lft.hpp"
#include "lfdtn/motion_seg.hpp"
#include "lfdtn/phase_motion.hpp"
#include "lfdtn/predictor.hpp"
#include "lfdtn/scene.hpp"
#include "lfdtn/tensor_io.hpp"
#include "lfdtn/transform_model.hpp"

namespace lfdtn {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline Image random_image(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image x(rows, cols);
  for (auto& v : x.vec()) v = u(rng);
  return x;
}

/// Grid holding one Np x Np cell, for spectrum-level checks.
inline GridSpec single_cell_grid(int Np) {
  GridSpec g;
  g.U = g.V = g.N = g.Np = Np;
  g.H = 1;
  g.LU = g.LV = g.L = 1;
  return g;
}

inline double interior_max_error(const Image& a, const Image& b, int border) {
  double e = 0.0;
  for (int r = border; r < a.rows() - border; ++r)
    for (int c = border; c < a.cols() - border; ++c) e = std::max(e, std::abs(a(r, c) - b(r, c)));
  return e;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace detail

inline std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> out;
  auto check = [&out](const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
    try {
      auto [ok, d] = f();
      out.push_back({name, ok, d});
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };
  std::mt19937_64 rng(20240613);
  const PredictorConfig pc;
  const Pipeline pl = Pipeline::make(pc, 64, 64);

  check("lft/ilft reconstruction", [&] {
    double e = 0.0;
    for (int i = 0; i < 3; ++i) {
      auto x = detail::random_image(64, 64, rng);
      e = std::max(e, detail::interior_max_error(ilft(lft(x, pl.grid, pl.window), pl.window), x, 0));
    }
    return std::pair{e <= 1e-5, "max error " + detail::fmt(e)};
  });

  check("poc integer shifts", [&] {
    const auto g = detail::single_cell_grid(32);
    const auto x = detail::random_image(32, 32, rng);
    LocalSpectra X0(g), X1(g);
    std::vector<cplx> a(1024), b(1024);
    int fails = 0;
    for (int dr = -7; dr <= 7; ++dr)
      for (int dc = -7; dc <= 7; ++dc) {
        for (int r = 0; r < 32; ++r)
          for (int c = 0; c < 32; ++c) {
            a[r * 32 + c] = x(r, c);
            b[r * 32 + c] = x(((r - dr) % 32 + 32) % 32, ((c - dc) % 32 + 32) % 32);
          }
        fft2(32, a, X0.cell(0));
        fft2(32, b, X1.cell(0));
        auto p = poc(phase_diff(X1, X0).cell(0), 32);
        fails += p.drow != dr || p.dcol != dc;
      }
    return std::pair{fails == 0, std::to_string(fails) + " failures of 225"};
  });

  check("fourier shift fidelity", [&] {
    auto x = detail::random_image(64, 64, rng);
    VelocityField vf(pl.grid);
    std::fill(vf.vx.begin(), vf.vx.end(), 3.0);
    std::fill(vf.vy.begin(), vf.vy.end(), -2.0);
    auto pd = velocity_to_pd(vf);
    auto y = m_ilft(phase_add(lft(x, pl.grid, pl.window), pd), pl.window, pd);
    double e = 0.0;
    for (int r = 10; r < 54; ++r)
      for (int c = 10; c < 54; ++c) e = std::max(e, std::abs(y(r, c) - x(r + 2, c - 3)));
    return std::pair{e <= 1e-4, "interior max error " + detail::fmt(e)};
  });

  check("velocity bottleneck round trip", [&] {
    VelocityField vf(pl.grid);
    std::uniform_real_distribution<double> u(-pl.grid.Np / 4.0, pl.grid.Np / 4.0);
    for (int l = 0; l < pl.grid.L; ++l) {
      vf.vx[l] = u(rng);
      vf.vy[l] = u(rng);
    }
    auto back = extract_velocity(velocity_to_pd(vf), std::vector<double>(pl.grid.L * pl.grid.cell_bins(), 1.0));
    double e = 0.0;
    for (int l = 0; l < pl.grid.L; ++l) e = std::max({e, std::abs(back.vx[l] - vf.vx[l]), std::abs(back.vy[l] - vf.vy[l])});
    return std::pair{e <= 1e-6, "max error " + detail::fmt(e)};
  });

  check("static scene prediction", [&] {
    auto x = detail::random_image(64, 64, rng);
    auto r = predict_next_frame(x, x, pl, TMHandle{});
    const double e = detail::interior_max_error(r.prediction, x, pl.grid.image_pad);
    return std::pair{e <= 1e-3, "interior max error " + detail::fmt(e)};
  });

  check("transform model identity at init", [&] {
    TMHandle m{init_tm_params(TMArch{}, 1)};
    auto x = detail::random_image(64, 64, rng), y = detail::random_image(64, 64, rng);
    auto a = predict_next_frame(x, y, pl, m), b = predict_next_frame(x, y, pl, TMHandle{});
    return std::pair{a.prediction == b.prediction, std::string(a.prediction == b.prediction ? "exact" : "differs")};
  });

  check("parameter count", [&] {
    TMArch a;
    const auto n = init_tm_params(a, 0).values.size();
    return std::pair{n == a.parameter_count() && n <= 5000, std::to_string(n) + " parameters"};
  });

  check("segmentation correction fixed point", [&] {
    SegState s{detail::random_image(64, 64, rng), detail::random_image(64, 64, rng),
               detail::random_image(64, 64, rng), identity_pd(pl.grid), 0};
    SegPrediction p{s.fg, s.a, composite(s.fg, s.bg, s.a), VelocityField(pl.grid), 0};
    SegGains g;
    g.lambda_a = 0.0;
    auto n = seg_correct(s, p, p.frame, g);
    const bool ok = n.fg == s.fg && n.bg == s.bg && n.a == s.a;
    return std::pair{ok, std::string(ok ? "unchanged" : "changed")};
  });

  check("file format round trips", [&] {
    std::vector<float> px(12);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>((i * 21) % 256 / 255.0);
    Frame f(3, 4, px);
    const bool pgm = decode_pgm(encode_pgm(f)) == f;
    Tensor t{{2, 3}, {1.5f, -2.f, 3.25f, 0.f, 1e-20f, 7.f}};
    const bool lf = decode_tensor(encode_tensor(t)) == t;
    return std::pair{pgm && lf, std::string("pgm ") + (pgm ? "ok" : "bad") + ", lfdt " + (lf ? "ok" : "bad")};
  });

  check("generator determinism", [&] {
    DatasetConfig d;
    d.background = Background::texture;
    auto a = gen_sequence(dataset_scene(d, 3)), b = gen_sequence(dataset_scene(d, 3));
    const bool ok = a.sequence.frames == b.sequence.frames;
    return std::pair{ok, std::string(ok ? "identical" : "differs")};
  });

  check("metric bounds", [&] {
    auto x = detail::random_image(32, 32, rng), y = detail::random_image(32, 32, rng);
    auto m = compute_metrics(x, y);
    const double asym = std::abs(dssim(x, y) - dssim(y, x));
    const bool ok = m.dssim >= 0 && m.dssim <= 1 && std::isfinite(m.bce) && asym <= 1e-9 &&
                    compute_metrics(x, x).psnr == kPsnrCap;
    return std::pair{ok, "dssim " + detail::fmt(m.dssim) + ", asymmetry " + detail::fmt(asym)};
  });

  return out;
}

}  // namespace lfdtn

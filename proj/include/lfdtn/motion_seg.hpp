#pragma once

// Self-supervised motion segmentation: a foreground/background/alpha state
// advanced by local phase transport and corrected by the gradient of the
// photometric error.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/lft.hpp"
#include "lfdtn/phase_motion.hpp"
#include "lfdtn/plane.hpp"
#include "lfdtn/predictor.hpp"
#include "lfdtn/transform_model.hpp"

namespace lfdtn {

struct SegGains {
  double fg = 0.5, bg = 0.5, a = 0.5;
  double lt = 0.7;  // blend weight of the measured transform
  double lambda_a = 1e-3;
};

struct SegInit {
  double smooth_sigma = 3.0;  // px, applied to |F_1 - F_0|
  double tau = 0.3;           // sigmoid center on the normalized difference
  double sharpness = 20.0;
  double norm_floor = 0.1;    // normalizer is max(max difference, floor)
  double beta0 = 1.0, rho = 0.5;
  int blend_steps = 3;        // S
};

struct SegConfig {
  PredictorConfig predictor;  // grid, window and transform-model R
  SegGains gains;
  SegInit init;
  int observe = -1;  // frames used for correction, -1 = all
  int horizon = 4;   // open-loop steps after the observations
};

struct SegState {
  Image fg, bg, a;
  PhaseDiffSet lt;
  int t = 0;  // index of the last frame this state explains
};

inline Image composite(const Image& fg, const Image& bg, const Image& a) {
  if (!fg.same_shape(bg) || !fg.same_shape(a)) throw ValidationError("composite: dimension mismatch");
  Image out(fg.rows(), fg.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * fg[i] + (1.0 - a[i]) * bg[i];
  return out;
}

struct SegPrediction {
  Image fg, a;  // a is clamped to [0,1]
  Image frame;
  VelocityField velocity;  // refined LT velocity
  int clamped = 0;
};

/// Local transform through the velocity bottleneck; cells without energy get
/// no transport.
inline PhaseDiffSet refine_lt(const Pipeline& pl, const TMHandle& model, const PhaseDiffSet& lt,
                              const LocalSpectra& Xfg, const LocalSpectra& Xa, VelocityField* vf_out = nullptr) {
  std::vector<double> e(lt.data.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::abs(Xfg.data[i]) + std::abs(Xa.data[i]);
  auto raw = extract_velocity(lt, e);
  std::vector<VelocityField> hist{raw};
  auto vf = tm_forward(model, assemble_input(hist, pl.config.R), raw);
  for (int l = 0; l < pl.grid.L; ++l)
    if (raw.low_energy[l]) vf.vx[l] = vf.vy[l] = 0.0;
  auto pd = velocity_to_pd(vf);
  if (vf_out) *vf_out = std::move(vf);
  return pd;
}

inline SegPrediction seg_predict(const SegState& s, const Pipeline& pl, const TMHandle& model = {}) {
  const auto Xfg = lft(s.fg, pl.grid, pl.window);
  const auto Xa = lft(s.a, pl.grid, pl.window);
  SegPrediction p;
  const auto lt = refine_lt(pl, model, s.lt, Xfg, Xa, &p.velocity);
  p.fg = m_ilft(phase_add(Xfg, lt), pl.window, lt, pl.config.synthesis);
  p.a = m_ilft(phase_add(Xa, lt), pl.window, lt, pl.config.synthesis);
  for (auto& v : p.a.vec()) {
    if (v < 0.0 || v > 1.0) ++p.clamped;
    v = std::clamp(v, 0.0, 1.0);
  }
  p.frame = composite(p.fg, s.bg, p.a);
  return p;
}

/// 0.5 * sum (F_hat - F)^2 + lambda * sum |A|; seg_correct takes one gradient
/// step on this objective.
inline double seg_objective(const Image& fg, const Image& bg, const Image& a, const Image& observed, double lambda) {
  const auto f = composite(fg, bg, a);
  double j = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double e = f[i] - observed[i];
    j += 0.5 * e * e + lambda * std::abs(a[i]);
  }
  return j;
}

/// Correction of the predicted state against the observed frame. The
/// returned state keeps `s.lt`; the transform is updated separately.
inline SegState seg_correct(const SegState& s, const SegPrediction& p, const Image& observed, const SegGains& gn) {
  if (!observed.same_shape(p.frame)) throw ValidationError("seg_correct: observed frame has wrong size");
  SegState out{p.fg, s.bg, p.a, s.lt, s.t + 1};
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = p.frame[i] - observed[i];
    const double a = p.a[i];
    const double sg = a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    out.fg[i] = p.fg[i] - gn.fg * e * a;
    out.bg[i] = s.bg[i] - gn.bg * e * (1.0 - a);
    out.a[i] = std::clamp(a - gn.a * e * (p.fg[i] - s.bg[i]) - gn.a * gn.lambda_a * sg, 0.0, 1.0);
  }
  return out;
}

namespace detail {

inline PhaseDiffSet normalized_blend(const PhaseDiffSet& a, const PhaseDiffSet& b, double wa) {
  PhaseDiffSet out(a.grid);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const cplx z = wa * a.data[i] + (1.0 - wa) * b.data[i];
    const double m = std::abs(z);
    out.data[i] = m > 1e-12 ? z / m : b.data[i];
  }
  return out;
}

inline std::vector<double> gaussian_taps(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

inline Image smooth(const Image& x, double sigma) {
  if (sigma <= 0.0) return x;
  const auto k = gaussian_taps(sigma);
  const int r = static_cast<int>(k.size() / 2);
  Image tmp(x.rows(), x.cols()), out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += k[d + r] * x(i, std::clamp(j + d, 0, x.cols() - 1));
      tmp(i, j) = s;
    }
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += k[d + r] * tmp(std::clamp(i + d, 0, x.rows() - 1), j);
      out(i, j) = s;
    }
  return out;
}

inline Image initial_alpha(const Image& f1, const Image& f0, const SegInit& c) {
  Image d(f1.rows(), f1.cols());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(f1[i] - f0[i]);
  d = smooth(d, c.smooth_sigma);
  double mx = c.norm_floor;
  for (double v : d.vec()) mx = std::max(mx, v);
  for (auto& v : d.vec()) v = 1.0 / (1.0 + std::exp(-c.sharpness * (v / mx - c.tau)));
  return d;
}

inline Image pixel_median(const std::vector<Image>& xs) {
  Image out(xs.front().rows(), xs.front().cols());
  std::vector<double> v(xs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < xs.size(); ++k) v[k] = xs[k][i];
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out[i] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return out;
}

inline Image masked(const Image& x, const Image& a) {
  Image out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * a[i];
  return out;
}

}  // namespace detail

/// Measured transform from the FG and A pairs, combined per bin by the
/// energy-weighted phasor sum (the sum of the two cross-power spectra), then
/// blended into the previous transform.
inline PhaseDiffSet seg_update_lt(const PhaseDiffSet& lt_prev, const Image& fg_new, const Image& a_new,
                                  const Image& fg_old, const Image& a_old, const Pipeline& pl, double eta_lt) {
  const auto& g = pl.grid;
  const auto F1 = lft(fg_new, g, pl.window), F0 = lft(fg_old, g, pl.window);
  const auto A1 = lft(a_new, g, pl.window), A0 = lft(a_old, g, pl.window);
  PhaseDiffSet measured(g);
  for (std::size_t i = 0; i < measured.data.size(); ++i) {
    const cplx z = F1.data[i] * std::conj(F0.data[i]) + A1.data[i] * std::conj(A0.data[i]);
    const double m = std::abs(z);
    if (m < pl.config.energy_eps) {
      measured.flagged[i] = 1;
    } else {
      measured.data[i] = z / m;
    }
  }
  if (eta_lt >= 1.0) return measured;
  return detail::normalized_blend(measured, lt_prev, eta_lt);
}

struct SegStep {
  SegState state;        // after correction (or prediction, when open-loop)
  Image predicted;       // F_hat for this step
  VelocityField velocity;
  bool corrected = false;
  int clamped = 0;
};

struct SegResult {
  std::vector<SegStep> steps;  // steps[0] is the initialization at frame seed_count-1
};

inline SegState seg_initialize(const std::vector<Image>& frames, int seed_count, int t, const Pipeline& pl,
                               const SegInit& c) {
  std::vector<Image> seeds(frames.begin(), frames.begin() + seed_count);
  SegState s;
  s.bg = detail::pixel_median(seeds);
  s.a = detail::initial_alpha(frames[t], frames[t - 1], c);
  s.fg = frames[t];
  const auto X1 = lft(detail::masked(frames[t], s.a), pl.grid, pl.window);
  const auto X0 = lft(detail::masked(frames[t - 1], s.a), pl.grid, pl.window);
  s.lt = phase_diff(X1, X0, pl.config.energy_eps);
  s.t = t;
  return s;
}

inline SegResult seg_run(const std::vector<Image>& frames, int seed_count, const SegConfig& cfg,
                         const TMHandle& model = {}) {
  if (seed_count < 2) throw ValidationError("seg_run: need at least 2 seed frames");
  if (frames.size() < static_cast<std::size_t>(seed_count)) throw ValidationError("seg_run: fewer frames than seeds");
  const int observe = cfg.observe < 0 ? static_cast<int>(frames.size()) : std::min<int>(cfg.observe, frames.size());
  if (observe < seed_count) throw ValidationError("seg_run: observe must cover the seed frames");
  const Pipeline pl = Pipeline::make(cfg.predictor, frames[0].rows(), frames[0].cols());
  const auto& c = cfg.init;

  SegResult res;
  SegState s = seg_initialize(frames, seed_count, seed_count - 1, pl, c);
  res.steps.push_back({s, composite(s.fg, s.bg, s.a), VelocityField(pl.grid), false, 0});

  for (int t = seed_count; t < observe; ++t) {
    auto p = seg_predict(s, pl, model);
    SegState next = seg_correct(s, p, frames[t], cfg.gains);
    next.lt = seg_update_lt(s.lt, next.fg, next.a, s.fg, s.a, pl, cfg.gains.lt);
    const int k = t - (seed_count - 1);
    if (k <= c.blend_steps) {
      const double beta = c.beta0 * std::pow(c.rho, k);
      const SegState re = seg_initialize(frames, seed_count, t, pl, c);
      for (std::size_t i = 0; i < next.fg.size(); ++i) {
        next.fg[i] = beta * re.fg[i] + (1 - beta) * next.fg[i];
        next.bg[i] = beta * re.bg[i] + (1 - beta) * next.bg[i];
        next.a[i] = beta * re.a[i] + (1 - beta) * next.a[i];
      }
      next.lt = detail::normalized_blend(re.lt, next.lt, beta);
    }
    res.steps.push_back({next, std::move(p.frame), std::move(p.velocity), true, p.clamped});
    s = std::move(next);
  }

  for (int h = 0; h < cfg.horizon; ++h) {
    auto p = seg_predict(s, pl, model);
    SegState next{p.fg, s.bg, p.a, s.lt, s.t + 1};
    res.steps.push_back({next, std::move(p.frame), std::move(p.velocity), false, p.clamped});
    s = std::move(next);
  }
  return res;
}

/// Intersection over union of {a >= 0.5} and a binary mask.
template <class M>
double alpha_iou(const Image& a, const Plane<M>& mask) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool p = a[i] >= 0.5, q = mask[i] != 0;
    inter += p && q;
    uni += p || q;
  }
  return uni ? static_cast<double>(inter) / uni : 1.0;
}

}  // namespace lfdtn

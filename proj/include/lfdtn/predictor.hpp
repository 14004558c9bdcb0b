#pragma once

// One-step frame prediction from two frames and closed-loop rollout.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/lft.hpp"
#include "lfdtn/phase_motion.hpp"
#include "lfdtn/plane.hpp"
#include "lfdtn/transform_model.hpp"
#include "lfdtn/window.hpp"

namespace lfdtn {

struct PredictorConfig {
  int N = 15;
  int H = 7;
  int P = 4;
  WindowKind window = WindowKind::confined_gaussian;
  double sigma_t = 0.2;
  int R = 1;
  int horizon = 8;
  double energy_eps = kDefaultEnergyEps;
  MIlftOptions synthesis;
};

/// Grid and window resolved for a concrete frame size.
struct Pipeline {
  PredictorConfig config;
  GridSpec grid;
  Window window;

  static Pipeline make(const PredictorConfig& cfg, int U, int V) {
    Pipeline p;
    p.config = cfg;
    p.grid = plan_grid(U, V, cfg.N, cfg.H, cfg.P);
    p.window = make_window(cfg.window, cfg.N, cfg.sigma_t);
    if (auto rep = check_nola(p.window, cfg.H, 1, cfg.synthesis.eps); !rep.ok)
      throw ValidationError("predictor: window fails NOLA at stride " + std::to_string(cfg.H) + " (min denominator " +
                            std::to_string(rep.min_denominator) + ")");
    if (cfg.R < 0) throw ValidationError("predictor: R must be >= 0");
    return p;
  }
};

/// Everything one prediction step computes, kept for the adjoint pass.
struct StepTape {
  PhaseDiffSet pd;
  std::vector<double> energies;
  VelocityField raw;
  TMInput input;
  TMCache tm_cache;
  VelocityField refined;
  PhaseDiffSet pd_hat;
  LocalSpectra advanced;  // phase-added spectra of x_t
  MIlftTape synthesis;
  Image unclamped;
};

struct StepResult {
  Image prediction;
  VelocityField raw, refined;
  int clamped_pixels = 0;
};

/// Core of one step. `past` holds earlier measured fields, newest first.
inline StepResult predict_from_spectra(const Pipeline& pl, const TMHandle& model, const LocalSpectra& Xprev,
                                       const LocalSpectra& Xt, std::span<const VelocityField> past,
                                       StepTape* tape = nullptr) {
  StepTape local;
  StepTape& t = tape ? *tape : local;
  const int R = pl.config.R;
  if (!model.identity() && model.params->arch.R != R)
    throw ValidationError("predictor: model was built for R=" + std::to_string(model.params->arch.R) +
                          ", config has R=" + std::to_string(R));

  t.pd = phase_diff(Xt, Xprev, pl.config.energy_eps);
  t.energies = bin_energies(Xt);
  t.raw = extract_velocity(t.pd, t.energies);

  std::vector<VelocityField> hist;
  hist.reserve(R + 1);
  hist.push_back(t.raw);
  for (std::size_t j = 0; j < past.size() && static_cast<int>(hist.size()) < R + 1; ++j) hist.push_back(past[j]);
  t.input = assemble_input(hist, R);
  t.refined = tm_forward(model, t.input, t.raw, &t.tm_cache);
  for (int l = 0; l < pl.grid.L; ++l)
    if (t.raw.low_energy[l]) t.refined.vx[l] = t.refined.vy[l] = 0.0;

  t.pd_hat = velocity_to_pd(t.refined);
  t.advanced = phase_add(Xt, t.pd_hat);
  t.unclamped = m_ilft(t.advanced, pl.window, t.pd_hat, pl.config.synthesis, &t.synthesis);

  StepResult r{t.unclamped, t.raw, t.refined, 0};
  for (auto& v : r.prediction.vec()) {
    if (v < 0.0 || v > 1.0) ++r.clamped_pixels;
    v = std::clamp(v, 0.0, 1.0);
  }
  return r;
}

/// Predicts x_{t+1} from (x_{t-1}, x_t). `history` holds earlier measured
/// fields, newest first (may be empty).
inline StepResult predict_next_frame(const Image& x_prev, const Image& x_t, const Pipeline& pl, const TMHandle& model,
                                     std::span<const VelocityField> history = {}) {
  const auto Xp = lft(x_prev, pl.grid, pl.window);
  const auto Xt = lft(x_t, pl.grid, pl.window);
  return predict_from_spectra(pl, model, Xp, Xt, history);
}

struct RolloutResult {
  std::vector<Image> predictions;
  std::vector<VelocityField> raw, refined;
};

/// Closed-loop rollout: every prediction becomes the next x_t. Velocity
/// history for the model is measured on whatever frames the loop sees,
/// predicted ones included.
inline RolloutResult rollout(std::span<const Image> seeds, int T, const Pipeline& pl, const TMHandle& model) {
  if (seeds.size() < 2) throw ValidationError("rollout: need at least 2 seed frames");
  if (T < 0) throw ValidationError("rollout: negative horizon");
  RolloutResult out;
  if (T == 0) return out;

  std::vector<VelocityField> measured;  // oldest first
  LocalSpectra Xprev = lft(seeds[0], pl.grid, pl.window);
  for (std::size_t i = 1; i + 1 < seeds.size(); ++i) {
    auto Xi = lft(seeds[i], pl.grid, pl.window);
    auto pd = phase_diff(Xi, Xprev, pl.config.energy_eps);
    measured.push_back(extract_velocity(pd, bin_energies(Xi)));
    Xprev = std::move(Xi);
  }
  LocalSpectra Xt = lft(seeds.back(), pl.grid, pl.window);

  for (int s = 0; s < T; ++s) {
    std::vector<VelocityField> past;
    for (auto it = measured.rbegin(); it != measured.rend() && static_cast<int>(past.size()) < pl.config.R; ++it)
      past.push_back(*it);
    auto r = predict_from_spectra(pl, model, Xprev, Xt, past);
    measured.push_back(r.raw);
    out.raw.push_back(std::move(r.raw));
    out.refined.push_back(std::move(r.refined));
    Xprev = std::move(Xt);
    Xt = lft(r.prediction, pl.grid, pl.window);
    out.predictions.push_back(std::move(r.prediction));
  }
  return out;
}

/// Baseline: repeat the last seed frame.
inline std::vector<Image> copy_last_rollout(std::span<const Image> seeds, int T) {
  return std::vector<Image>(static_cast<std::size_t>(std::max(T, 0)), seeds.back());
}

}  // namespace lfdtn

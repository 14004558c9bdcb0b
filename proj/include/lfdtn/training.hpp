#pragma once

// End-to-end training of the transform model by backpropagation through the
// closed-loop rollout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/metrics.hpp"
#include "lfdtn/predictor.hpp"

namespace lfdtn {

/// One training sequence: the first seed_count frames are observed, the rest
/// are prediction targets.
struct Sequence {
  std::vector<Image> frames;
  int seed_count = 2;

  int horizon() const noexcept { return static_cast<int>(frames.size()) - seed_count; }
};

struct LossWeights {
  double alpha = 1.0;  // DSSIM
  double beta = 1.0;   // MSE
  double gamma = 0.9;  // per-step discount
};

struct TrainConfig {
  TMArch arch;
  LossWeights loss;
  int epochs = 40;
  int batch_size = 8;
  double lr_min = 1e-4;
  double lr_max = 1e-2;
  double lr_period = 20.0;  // epochs per triangular cycle
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RolloutLoss {
  double loss = 0.0, dssim = 0.0, mse = 0.0;
};

/// Loss of one sequence plus the gradient with respect to the parameters.
struct SequenceGrad {
  RolloutLoss loss;
  std::vector<double> grad;
};

inline double cyclic_lr(const TrainConfig& c, double epoch_pos) {
  const double f = std::fmod(epoch_pos, c.lr_period) / c.lr_period;
  const double tri = 1.0 - std::abs(2.0 * f - 1.0);
  return c.lr_min + (c.lr_max - c.lr_min) * tri;
}

namespace detail {

inline void check_sequence(const Sequence& s, const Pipeline& pl) {
  if (s.seed_count < 2) throw ValidationError("train: sequence needs seed_count >= 2");
  if (s.horizon() < 1) throw ValidationError("train: sequence has no frames to predict");
  for (const auto& f : s.frames)
    if (f.rows() != pl.grid.U || f.cols() != pl.grid.V)
      throw ValidationError("train: frame size does not match the pipeline grid");
}

/// Per-step record for the backward pass. hist_src[j] names the producer of
/// the j-th history block: the step index whose raw field it is, or -1 for a
/// field measured on seed frames (constant).
struct RolloutStep {
  StepTape tape;
  std::vector<int> hist_src;
  Image prediction;
};

}  // namespace detail

/// Closed-loop rollout loss, and its exact gradient when `grad` is given.
inline RolloutLoss rollout_loss(const Pipeline& pl, const TMParams& params, const Sequence& seq, const LossWeights& lw,
                                std::vector<double>* grad = nullptr) {
  detail::check_sequence(seq, pl);
  const GridSpec& g = pl.grid;
  const int R = pl.config.R;
  const int T = seq.horizon();
  TMHandle model{params};

  // Seeds: everything measured before the first prediction is constant.
  std::vector<VelocityField> seed_fields;
  LocalSpectra Xprev = lft(seq.frames[0], g, pl.window);
  for (int i = 1; i + 1 < seq.seed_count; ++i) {
    auto Xi = lft(seq.frames[i], g, pl.window);
    seed_fields.push_back(extract_velocity(phase_diff(Xi, Xprev, pl.config.energy_eps), bin_energies(Xi)));
    Xprev = std::move(Xi);
  }
  LocalSpectra Xt = lft(seq.frames[seq.seed_count - 1], g, pl.window);

  std::vector<detail::RolloutStep> steps(T);
  std::vector<LocalSpectra> Xts, Xprevs;
  if (grad) {
    Xts.reserve(T);
    Xprevs.reserve(T);
  }
  std::vector<VelocityField> raws;
  RolloutLoss out;
  std::vector<Image> gY(T);
  const double invT = 1.0 / T;

  for (int s = 0; s < T; ++s) {
    auto& st = steps[s];
    std::vector<VelocityField> past;
    st.hist_src = {s};
    for (int j = 1; j <= R; ++j) {
      const int src = s - j;
      if (src >= 0) {
        past.push_back(raws[src]);
        st.hist_src.push_back(src);
      } else {
        const int si = static_cast<int>(seed_fields.size()) + src;
        if (si < 0) break;
        past.push_back(seed_fields[si]);
        st.hist_src.push_back(-1);
      }
    }
    auto r = predict_from_spectra(pl, model, Xprev, Xt, past, &st.tape);
    raws.push_back(st.tape.raw);
    const Image& target = seq.frames[seq.seed_count + s];
    const double wgt = std::pow(lw.gamma, s) * invT;
    Image gd, gm;
    const double d = dssim(r.prediction, target, grad ? &gd : nullptr);
    const double m = mse(r.prediction, target, grad ? &gm : nullptr);
    out.dssim += wgt * d;
    out.mse += wgt * m;
    if (grad) {
      gY[s] = Image(g.U, g.V, 0.0);
      for (std::size_t i = 0; i < gY[s].size(); ++i) gY[s][i] = wgt * (lw.alpha * gd[i] + lw.beta * gm[i]);
      Xts.push_back(Xt);
      Xprevs.push_back(Xprev);
    }
    st.prediction = std::move(r.prediction);
    Xprev = std::move(Xt);
    Xt = lft(st.prediction, g, pl.window);
  }
  out.loss = lw.alpha * out.dssim + lw.beta * out.mse;
  if (!grad) return out;

  // Reverse sweep.
  grad->assign(params.values.size(), 0.0);
  const std::size_t nb = static_cast<std::size_t>(g.L) * g.cell_bins();
  std::vector<LocalSpectra> gX(T, LocalSpectra(g));
  std::vector<VelocityGrad> gRaw(T, VelocityGrad(g.L));
  for (int s = T - 1; s >= 0; --s) {
    auto& st = steps[s];
    const StepTape& tp = st.tape;

    Image gu = gY[s];
    for (std::size_t i = 0; i < gu.size(); ++i)
      if (tp.unclamped[i] < 0.0 || tp.unclamped[i] > 1.0) gu[i] = 0.0;

    auto gm = m_ilft_backward(tp.synthesis, g, gu, pl.config.synthesis);
    std::vector<cplx> gpd = std::move(gm.pd);
    phase_add_backward(Xts[s], tp.pd_hat, gm.spectra, &gX[s], &gpd);

    std::vector<double> gvx, gvy;
    velocity_to_pd_backward(tp.refined, tp.pd_hat, gpd, gvx, gvy);
    std::vector<double> gres(2 * static_cast<std::size_t>(g.L), 0.0);
    for (int l = 0; l < g.L; ++l) {
      if (tp.raw.low_energy[l]) continue;
      gRaw[s].vx[l] += gvx[l];
      gRaw[s].vy[l] += gvy[l];
      gres[l] = gvx[l];
      gres[g.L + l] = gvy[l];
    }
    auto tg = tm_backward(params, tp.tm_cache, gres);
    for (std::size_t i = 0; i < tg.params.size(); ++i) (*grad)[i] += tg.params[i];
    for (int j = 0; j <= R; ++j) {
      const int src = st.hist_src[std::min<std::size_t>(j, st.hist_src.size() - 1)];
      if (src < 0) continue;
      auto& dst = gRaw[src];
      const double* gi = tg.input.data() + static_cast<std::size_t>(j) * 4 * g.L;
      for (int l = 0; l < g.L; ++l) {
        dst.vx[l] += gi[l];
        dst.vy[l] += gi[g.L + l];
        dst.var_x[l] += gi[2 * g.L + l];
        dst.var_y[l] += gi[3 * g.L + l];
      }
    }

    std::vector<cplx> gp(nb, cplx(0.0, 0.0));
    std::vector<double> ge(nb, 0.0);
    extract_velocity_backward(tp.pd, tp.energies, tp.raw, gRaw[s], gp, ge);
    bin_energies_backward(Xts[s], ge, gX[s]);
    if (s > 0) {
      phase_diff_backward(Xts[s], Xprevs[s], tp.pd, gp, &gX[s], &gX[s - 1]);
      auto gimg = lft_backward(gX[s], pl.window);
      for (std::size_t i = 0; i < gimg.size(); ++i) gY[s - 1][i] += gimg[i];
    }
  }
  return out;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0, loss = 0.0, dssim = 0.0, mse = 0.0;
};

struct TrainResult {
  TMParams params;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string message;
};

/// Sequence gradients computed in parallel, then summed in index order so
/// the result does not depend on the worker count.
inline std::vector<SequenceGrad> batch_gradients(const Pipeline& pl, const TMParams& params,
                                                 std::span<const Sequence* const> batch, const LossWeights& lw,
                                                 int threads) {
  std::vector<SequenceGrad> out(batch.size());
  auto work = [&](std::size_t i) { out[i].loss = rollout_loss(pl, params, *batch[i], lw, &out[i].grad); };
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(batch.size())));
  if (nt == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(nt);
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < batch.size(); i += nt) work(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Trains a fresh model. on_epoch, if set, sees every log row as it is made.
inline TrainResult train(std::span<const Sequence> data, const PredictorConfig& pcfg, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.empty()) throw ValidationError("train: empty dataset");
  if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (cfg.epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (cfg.arch.R != pcfg.R) throw ValidationError("train: model R differs from predictor R");
  const int U = data.front().frames.front().rows(), V = data.front().frames.front().cols();
  const Pipeline pl = Pipeline::make(pcfg, U, V);
  for (const auto& s : data) detail::check_sequence(s, pl);

  TrainResult res{init_tm_params(cfg.arch, cfg.seed), {}, false, {}};
  const std::size_t np = res.params.values.size();
  std::vector<double> m1(np, 0.0), m2(np, 0.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t nbatch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  long long step = 0;

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    const TMParams good = res.params;
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog row{ep, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t b = 0; b < nbatch; ++b) {
      std::vector<const Sequence*> batch;
      for (std::size_t i = b * cfg.batch_size; i < std::min(data.size(), (b + 1) * cfg.batch_size); ++i)
        batch.push_back(&data[order[i]]);
      auto grads = batch_gradients(pl, res.params, batch, cfg.loss, cfg.threads);
      std::vector<double> gsum(np, 0.0);
      double bl = 0.0;
      for (const auto& sg : grads) {
        for (std::size_t i = 0; i < np; ++i) gsum[i] += sg.grad[i];
        bl += sg.loss.loss;
        row.loss += sg.loss.loss;
        row.dssim += sg.loss.dssim;
        row.mse += sg.loss.mse;
      }
      bool finite = std::isfinite(bl);
      for (double v : gsum) finite = finite && std::isfinite(v);
      if (!finite) {
        res.params = good;
        res.diverged = true;
        res.message = "loss became non-finite in epoch " + std::to_string(ep) + "; parameters rolled back to epoch start";
        return res;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      const double lr = cyclic_lr(cfg, ep + static_cast<double>(b) / nbatch);
      row.lr = lr;
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < np; ++i) {
        const double gi = gsum[i] * inv;
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * gi;
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * gi * gi;
        auto& w = res.params.values[i];
        w -= lr * cfg.weight_decay * w;
        w -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
      }
    }
    const double n = static_cast<double>(data.size());
    row.loss /= n;
    row.dssim /= n;
    row.mse /= n;
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return res;
}

/// Mean per-frame rollout MSE over a dataset (no discount).
inline double mean_rollout_mse(std::span<const Sequence> data, const Pipeline& pl, const TMHandle& model) {
  double total = 0.0;
  long long count = 0;
  for (const auto& s : data) {
    auto r = rollout(std::span<const Image>(s.frames.data(), s.seed_count), s.horizon(), pl, model);
    for (int t = 0; t < s.horizon(); ++t) {
      total += mse(r.predictions[t], s.frames[s.seed_count + t]);
      ++count;
    }
  }
  return count ? total / count : 0.0;
}

inline double mean_copy_last_mse(std::span<const Sequence> data) {
  double total = 0.0;
  long long count = 0;
  for (const auto& s : data)
    for (int t = 0; t < s.horizon(); ++t) {
      total += mse(s.frames[s.seed_count - 1], s.frames[s.seed_count + t]);
      ++count;
    }
  return count ? total / count : 0.0;
}

}  // namespace lfdtn

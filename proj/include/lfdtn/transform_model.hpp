#pragma once

// The transform model: a small DenseNet-style convolution stack over the
// cell grid that refines measured per-cell velocities. Output is a residual
// added to the newest measured velocity, with a zero-initialized final
// projection so an untrained model is the identity.

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/phase_motion.hpp"

namespace lfdtn {

/// Channels per time step: vx, vy, var_x, var_y.
inline constexpr int kChannelsPerStep = 4;
/// Positional channels: normalized cell row and column in [-1, 1].
inline constexpr int kPositionalChannels = 2;

inline int tm_input_channels(int R) { return kChannelsPerStep * (R + 1) + kPositionalChannels; }

struct TMInput {
  int rows = 0, cols = 0, channels = 0;
  std::vector<double> data;  // channels x rows x cols
  bool stale = false;        // history was padded by repetition

  double& at(int c, int r, int q) noexcept { return data[(static_cast<std::size_t>(c) * rows + r) * cols + q]; }
  double at(int c, int r, int q) const noexcept { return data[(static_cast<std::size_t>(c) * rows + r) * cols + q]; }
};

/// Stacks a newest-first velocity history into the model input. Histories
/// shorter than R+1 repeat their oldest entry.
inline TMInput assemble_input(std::span<const VelocityField> history, int R) {
  if (history.empty()) throw ValidationError("assemble_input: empty history");
  if (R < 0) throw ValidationError("assemble_input: R must be >= 0");
  const GridSpec& g = history.front().grid;
  TMInput in;
  in.rows = g.LU;
  in.cols = g.LV;
  in.channels = tm_input_channels(R);
  in.data.assign(static_cast<std::size_t>(in.channels) * g.L, 0.0);
  in.stale = history.size() < static_cast<std::size_t>(R + 1);
  for (int j = 0; j <= R; ++j) {
    const auto& vf = history[std::min<std::size_t>(j, history.size() - 1)];
    if (!(vf.grid == g)) throw ValidationError("assemble_input: history grids differ");
    for (int l = 0; l < g.L; ++l) {
      const int r = l / g.LV, c = l % g.LV;
      in.at(j * 4 + 0, r, c) = vf.vx[l];
      in.at(j * 4 + 1, r, c) = vf.vy[l];
      in.at(j * 4 + 2, r, c) = vf.var_x[l];
      in.at(j * 4 + 3, r, c) = vf.var_y[l];
    }
  }
  const int pc = kChannelsPerStep * (R + 1);
  for (int r = 0; r < g.LU; ++r)
    for (int c = 0; c < g.LV; ++c) {
      in.at(pc, r, c) = g.LU > 1 ? 2.0 * r / (g.LU - 1) - 1.0 : 0.0;
      in.at(pc + 1, r, c) = g.LV > 1 ? 2.0 * c / (g.LV - 1) - 1.0 : 0.0;
    }
  return in;
}

struct TMArch {
  int layers = 2;  // D_tm
  int growth = 8;
  int R = 1;

  int input_channels() const { return tm_input_channels(R); }
  int layer_in(int i) const { return input_channels() + i * growth; }
  int total_channels() const { return input_channels() + layers * growth; }

  /// Exact parameter count: per layer 3x3 kernels + bias + PReLU slopes, then
  /// a 1x1 projection (weights + bias) to two channels.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int i = 0; i < layers; ++i) n += static_cast<std::size_t>(9) * layer_in(i) * growth + 2 * growth;
    return n + 2 * static_cast<std::size_t>(total_channels()) + 2;
  }

  void validate() const {
    if (layers < 1) throw ValidationError("transform model: layer count must be >= 1");
    if (growth < 1) throw ValidationError("transform model: growth must be >= 1");
    if (R < 0) throw ValidationError("transform model: R must be >= 0");
  }
  bool operator==(const TMArch&) const = default;
};

/// Flat parameter vector with views into each block.
struct TMParams {
  TMArch arch;
  std::vector<double> values;

  struct Layout {
    std::vector<std::size_t> kernel, bias, slope;
    std::size_t proj_w = 0, proj_b = 0;
  };

  Layout layout() const {
    Layout L;
    std::size_t off = 0;
    for (int i = 0; i < arch.layers; ++i) {
      L.kernel.push_back(off);
      off += static_cast<std::size_t>(9) * arch.layer_in(i) * arch.growth;
      L.bias.push_back(off);
      off += arch.growth;
      L.slope.push_back(off);
      off += arch.growth;
    }
    L.proj_w = off;
    off += 2 * static_cast<std::size_t>(arch.total_channels());
    L.proj_b = off;
    return L;
  }
  std::size_t size() const noexcept { return values.size(); }
};

/// He-style random kernels, PReLU slopes 0.25, zero final projection.
inline TMParams init_tm_params(const TMArch& arch, std::uint64_t seed) {
  arch.validate();
  TMParams p{arch, std::vector<double>(arch.parameter_count(), 0.0)};
  auto L = p.layout();
  std::mt19937_64 rng(seed);
  for (int i = 0; i < arch.layers; ++i) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (9.0 * arch.layer_in(i))));
    const std::size_t nk = static_cast<std::size_t>(9) * arch.layer_in(i) * arch.growth;
    for (std::size_t j = 0; j < nk; ++j) p.values[L.kernel[i] + j] = nd(rng);
    for (int j = 0; j < arch.growth; ++j) p.values[L.slope[i] + j] = 0.25;
  }
  return p;
}

/// Identity transform model (no learned parameters at all).
struct TMHandle {
  std::optional<TMParams> params;  // empty = identity
  bool identity() const noexcept { return !params.has_value(); }
};

/// Activations kept for tm_backward.
struct TMCache {
  int rows = 0, cols = 0;
  std::vector<double> features;  // total_channels x rows x cols (post-activation)
  std::vector<double> preact;    // layers*growth x rows x cols
  bool valid = false;
};

namespace detail {

inline void check_input(const TMParams& p, const TMInput& in) {
  if (in.channels != p.arch.input_channels())
    throw ValidationError("tm_forward: input has " + std::to_string(in.channels) + " channels, model expects " +
                          std::to_string(p.arch.input_channels()));
  if (p.values.size() != p.arch.parameter_count()) throw ValidationError("tm_forward: parameter count mismatch");
}

}  // namespace detail

/// Residual velocity (2 x rows x cols: dvx then dvy).
inline std::vector<double> tm_residual(const TMParams& p, const TMInput& in, TMCache* cache = nullptr) {
  detail::check_input(p, in);
  const TMArch& a = p.arch;
  const int R = in.rows, C = in.cols;
  const std::size_t plane = static_cast<std::size_t>(R) * C;
  const auto L = p.layout();
  const double* w = p.values.data();

  std::vector<double> feat(static_cast<std::size_t>(a.total_channels()) * plane, 0.0);
  std::vector<double> pre(static_cast<std::size_t>(a.layers) * a.growth * plane, 0.0);
  std::copy(in.data.begin(), in.data.end(), feat.begin());

  for (int i = 0; i < a.layers; ++i) {
    const int cin = a.layer_in(i);
    for (int o = 0; o < a.growth; ++o) {
      double* z = pre.data() + (static_cast<std::size_t>(i) * a.growth + o) * plane;
      const double b = w[L.bias[i] + o];
      for (std::size_t q = 0; q < plane; ++q) z[q] = b;
      for (int c = 0; c < cin; ++c) {
        const double* k = w + L.kernel[i] + (static_cast<std::size_t>(o) * cin + c) * 9;
        const double* f = feat.data() + static_cast<std::size_t>(c) * plane;
        for (int r = 0; r < R; ++r)
          for (int q = 0; q < C; ++q) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
              const int rr = r + dy;
              if (rr < 0 || rr >= R) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                const int qq = q + dx;
                if (qq < 0 || qq >= C) continue;
                s += k[(dy + 1) * 3 + (dx + 1)] * f[rr * C + qq];
              }
            }
            z[r * C + q] += s;
          }
      }
      const double slope = w[L.slope[i] + o];
      double* y = feat.data() + static_cast<std::size_t>(cin + o) * plane;
      for (std::size_t q = 0; q < plane; ++q) y[q] = z[q] > 0.0 ? z[q] : slope * z[q];
    }
  }

  const int ct = a.total_channels();
  std::vector<double> out(2 * plane, 0.0);
  for (int o = 0; o < 2; ++o) {
    double* y = out.data() + o * plane;
    const double b = w[L.proj_b + o];
    for (std::size_t q = 0; q < plane; ++q) y[q] = b;
    for (int c = 0; c < ct; ++c) {
      const double wc = w[L.proj_w + static_cast<std::size_t>(o) * ct + c];
      if (wc == 0.0) continue;
      const double* f = feat.data() + static_cast<std::size_t>(c) * plane;
      for (std::size_t q = 0; q < plane; ++q) y[q] += wc * f[q];
    }
  }
  if (cache) {
    cache->rows = R;
    cache->cols = C;
    cache->features = std::move(feat);
    cache->preact = std::move(pre);
    cache->valid = true;
  }
  return out;
}

/// Refined field: newest measured velocity plus the model residual;
/// dispersions pass through from the newest input.
inline VelocityField tm_forward(const TMHandle& model, const TMInput& in, const VelocityField& newest,
                                TMCache* cache = nullptr) {
  VelocityField out = newest;
  if (model.identity()) return out;
  auto res = tm_residual(*model.params, in, cache);
  const std::size_t plane = newest.vx.size();
  for (std::size_t l = 0; l < plane; ++l) {
    out.vx[l] += res[l];
    out.vy[l] += res[plane + l];
  }
  return out;
}

struct TMGrad {
  std::vector<double> params;
  std::vector<double> input;  // channels x rows x cols
};

/// Reverse mode of tm_residual.
inline TMGrad tm_backward(const TMParams& p, const TMCache& cache, std::span<const double> grad_residual) {
  if (!cache.valid) throw ValidationError("tm_backward: forward cache missing");
  const TMArch& a = p.arch;
  const int R = cache.rows, C = cache.cols;
  const std::size_t plane = static_cast<std::size_t>(R) * C;
  if (grad_residual.size() != 2 * plane) throw ValidationError("tm_backward: gradient shape mismatch");
  const auto L = p.layout();
  const double* w = p.values.data();
  const int ct = a.total_channels();

  TMGrad g;
  g.params.assign(p.values.size(), 0.0);
  std::vector<double> gf(static_cast<std::size_t>(ct) * plane, 0.0);
  const auto& feat = cache.features;

  for (int o = 0; o < 2; ++o) {
    const double* gy = grad_residual.data() + o * plane;
    double sb = 0.0;
    for (std::size_t q = 0; q < plane; ++q) sb += gy[q];
    g.params[L.proj_b + o] += sb;
    for (int c = 0; c < ct; ++c) {
      const double* f = feat.data() + static_cast<std::size_t>(c) * plane;
      double* gfc = gf.data() + static_cast<std::size_t>(c) * plane;
      const double wc = w[L.proj_w + static_cast<std::size_t>(o) * ct + c];
      double sw = 0.0;
      for (std::size_t q = 0; q < plane; ++q) {
        sw += gy[q] * f[q];
        gfc[q] += wc * gy[q];
      }
      g.params[L.proj_w + static_cast<std::size_t>(o) * ct + c] += sw;
    }
  }

  std::vector<double> gz(plane);
  for (int i = a.layers - 1; i >= 0; --i) {
    const int cin = a.layer_in(i);
    for (int o = 0; o < a.growth; ++o) {
      const double* z = cache.preact.data() + (static_cast<std::size_t>(i) * a.growth + o) * plane;
      const double* gy = gf.data() + static_cast<std::size_t>(cin + o) * plane;
      const double slope = w[L.slope[i] + o];
      double gs = 0.0, gb = 0.0;
      for (std::size_t q = 0; q < plane; ++q) {
        if (z[q] > 0.0) {
          gz[q] = gy[q];
        } else {
          gz[q] = slope * gy[q];
          gs += gy[q] * z[q];
        }
        gb += gz[q];
      }
      g.params[L.slope[i] + o] += gs;
      g.params[L.bias[i] + o] += gb;
      for (int c = 0; c < cin; ++c) {
        const std::size_t koff = L.kernel[i] + (static_cast<std::size_t>(o) * cin + c) * 9;
        const double* k = w + koff;
        double* gk = g.params.data() + koff;
        const double* f = feat.data() + static_cast<std::size_t>(c) * plane;
        double* gfc = gf.data() + static_cast<std::size_t>(c) * plane;
        for (int r = 0; r < R; ++r)
          for (int q = 0; q < C; ++q) {
            const double gv = gz[r * C + q];
            if (gv == 0.0) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              const int rr = r + dy;
              if (rr < 0 || rr >= R) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                const int qq = q + dx;
                if (qq < 0 || qq >= C) continue;
                const int t = (dy + 1) * 3 + (dx + 1);
                gk[t] += gv * f[rr * C + qq];
                gfc[rr * C + qq] += k[t] * gv;
              }
            }
          }
      }
    }
  }
  g.input.assign(gf.begin(), gf.begin() + static_cast<std::ptrdiff_t>(a.input_channels() * plane));
  return g;
}

}  // namespace lfdtn

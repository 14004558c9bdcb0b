#pragma once

// Procedural moving-sprite scenes with ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/grid.hpp"
#include "lfdtn/phase_motion.hpp"
#include "lfdtn/plane.hpp"
#include "lfdtn/tensor_io.hpp"

namespace lfdtn {

enum class ShapeKind { disc, polygon, glyph };

inline std::string_view to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::polygon: return "polygon";
    case ShapeKind::glyph: return "glyph";
  }
  return "?";
}

inline ShapeKind parse_shape_kind(std::string_view s) {
  if (s == "disc") return ShapeKind::disc;
  if (s == "polygon") return ShapeKind::polygon;
  if (s == "glyph") return ShapeKind::glyph;
  throw ValidationError("unknown sprite shape '" + std::string(s) + "' (disc, polygon, glyph)");
}

struct SpriteSpec {
  ShapeKind shape = ShapeKind::disc;
  double size = 6.0;        // radius for disc/polygon, glyph height/2 otherwise
  int vertices = 5;         // polygon only
  char glyph = '0';         // built-in digit when stamp is empty
  std::string stamp;        // optional PGM stamp (intensity = alpha)
  double intensity = 1.0;
  double x = 32.0, y = 32.0;    // center, column/row
  double vx = 0.0, vy = 0.0;    // px/frame
  double angle = 0.0;           // degrees
  double angular_velocity = 0.0;
  double scale = 1.0;
  double scale_rate = 0.0;      // added to scale each frame
};

enum class Background { black, texture };

struct TextureSpec {
  std::uint64_t seed = 1;
  int components = 24;
  double max_frequency = 0.12;  // cycles per pixel
  double lo = 0.15, hi = 0.85;
  double vx = 0.0, vy = 0.0;    // global translation, px/frame
};

struct SceneConfig {
  int height = 64, width = 64;
  int frames = 10;
  int seed_count = 2;
  std::vector<SpriteSpec> sprites;
  Background background = Background::black;
  TextureSpec texture;
  bool bounce = true;  // false clamps at the border
  // Grid used for the ground-truth velocity labels.
  int N = 15, H = 7, P = 4;
  std::uint64_t seed = 0;  // mixed into the texture seed when nonzero

  void validate() const {
    if (height < 4 || width < 4) throw ValidationError("scene: frame must be at least 4x4");
    if (frames < 1) throw ValidationError("scene: frame count must be >= 1");
    if (seed_count < 2 || seed_count > frames) throw ValidationError("scene: seed_count must be in [2, frames]");
    for (const auto& s : sprites) {
      if (!(s.size > 0.0)) throw ValidationError("scene: sprite size must be positive");
      if (s.shape == ShapeKind::polygon && s.vertices < 3) throw ValidationError("scene: polygon needs >= 3 vertices");
      if (std::max(std::abs(s.vx), std::abs(s.vy)) > P)
        throw ValidationError("scene: sprite speed exceeds padding bound P=" + std::to_string(P));
    }
    if (std::max(std::abs(texture.vx), std::abs(texture.vy)) > P)
      throw ValidationError("scene: texture speed exceeds padding bound P=" + std::to_string(P));
  }
};

struct SpritePose {
  double x, y, angle, scale, vx, vy;  // vx, vy: displacement from the previous frame
};

struct GroundTruth {
  std::vector<std::vector<SpritePose>> poses;  // [frame][sprite]
  std::vector<Plane<std::uint8_t>> masks;      // union of sprite masks, 0/1
  std::vector<VelocityField> velocity;         // per frame, per cell
};

struct Scene {
  FrameSequence sequence;
  std::vector<Image> images;  // unquantized frames
  GroundTruth truth;
};

namespace detail {

/// 5x7 digit font, one row per byte, bit 4 = leftmost column.
inline const std::array<std::array<std::uint8_t, 7>, 10>& digit_font() {
  static const std::array<std::array<std::uint8_t, 7>, 10> f = {{
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},
      {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},
      {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},
      {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},
      {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
  }};
  return f;
}

/// Alpha bitmap with 4x4 supersampled coverage.
template <class Inside>
Image rasterize(int side, Inside inside) {
  Image a(side, side, 0.0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      int hit = 0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) hit += inside(r + (i + 0.5) / 4.0 - 0.5, c + (j + 0.5) / 4.0 - 0.5);
      a(r, c) = hit / 16.0;
    }
  return a;
}

inline Image sprite_bitmap(const SpriteSpec& s) {
  if (!s.stamp.empty()) return to_image(read_pgm(s.stamp));
  const int side = 2 * static_cast<int>(std::ceil(s.size)) + 3;
  const double c0 = (side - 1) / 2.0;
  switch (s.shape) {
    case ShapeKind::disc:
      return rasterize(side, [&](double r, double c) { return std::hypot(r - c0, c - c0) <= s.size; });
    case ShapeKind::polygon: {
      std::vector<std::array<double, 2>> v;
      for (int i = 0; i < s.vertices; ++i) {
        const double t = 2 * std::numbers::pi * i / s.vertices - std::numbers::pi / 2;
        v.push_back({c0 + s.size * std::sin(t), c0 + s.size * std::cos(t)});
      }
      return rasterize(side, [&](double r, double c) {
        bool in = false;
        for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
          if ((v[i][0] > r) != (v[j][0] > r) &&
              c < (v[j][1] - v[i][1]) * (r - v[i][0]) / (v[j][0] - v[i][0]) + v[i][1])
            in = !in;
        }
        return in;
      });
    }
    case ShapeKind::glyph: {
      if (s.glyph < '0' || s.glyph > '9') throw ValidationError("scene: built-in glyphs are digits 0-9");
      const auto& rows = digit_font()[s.glyph - '0'];
      const double cell = 2.0 * s.size / 7.0;
      const double w = 5 * cell, h = 7 * cell;
      return rasterize(side, [&](double r, double c) {
        const double gr = (r - (c0 - h / 2)) / cell, gc = (c - (c0 - w / 2)) / cell;
        if (gr < 0 || gc < 0 || gr >= 7 || gc >= 5) return false;
        return ((rows[static_cast<int>(gr)] >> (4 - static_cast<int>(gc))) & 1) != 0;
      });
    }
  }
  return {};
}

inline double bilinear(const Image& a, double r, double c) {
  const double fr = std::floor(r), fc = std::floor(c);
  const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
  const double dr = r - fr, dc = c - fc;
  auto at = [&](int i, int j) { return (i < 0 || j < 0 || i >= a.rows() || j >= a.cols()) ? 0.0 : a(i, j); };
  return (1 - dr) * ((1 - dc) * at(r0, c0) + dc * at(r0, c0 + 1)) + dr * ((1 - dc) * at(r0 + 1, c0) + dc * at(r0 + 1, c0 + 1));
}

}  // namespace detail

/// Band-limited background: a sum of random plane waves with frequencies up
/// to max_frequency. +-2.5 standard deviations map to [lo, hi]; the rare
/// excursions beyond are clipped.
class ProceduralTexture {
public:
  explicit ProceduralTexture(const TextureSpec& t) : spec_(t) {
    std::mt19937_64 rng(t.seed);
    std::uniform_real_distribution<double> uf(0.0, 1.0);
    for (int i = 0; i < t.components; ++i) {
      const double f = t.max_frequency * std::sqrt(uf(rng));
      const double th = 2 * std::numbers::pi * uf(rng);
      waves_.push_back({2 * std::numbers::pi * f * std::cos(th), 2 * std::numbers::pi * f * std::sin(th),
                        2 * std::numbers::pi * uf(rng), 0.5 + uf(rng)});
    }
    double power = 0.0;
    for (const auto& w : waves_) power += 0.5 * w[3] * w[3];
    scale_ = power > 0.0 ? 1.0 / (2.5 * std::sqrt(power)) : 0.0;
  }

  /// Value at continuous position (row y, column x).
  double operator()(double y, double x) const {
    double s = 0.0;
    for (const auto& w : waves_) s += w[3] * std::cos(w[0] * x + w[1] * y + w[2]);
    return std::clamp(spec_.lo + (spec_.hi - spec_.lo) * 0.5 * (1.0 + s * scale_), spec_.lo, spec_.hi);
  }

  Image render(int rows, int cols, double dy = 0.0, double dx = 0.0) const {
    Image out(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) out(r, c) = (*this)(r - dy, c - dx);
    return out;
  }

private:
  TextureSpec spec_;
  std::vector<std::array<double, 4>> waves_;  // kx, ky, phase, amplitude
  double scale_ = 1.0;
};

/// Renders a scene. Sprites later in the list occlude earlier ones.
inline Scene gen_sequence(const SceneConfig& cfg) {
  cfg.validate();
  const GridSpec grid = plan_grid(cfg.height, cfg.width, cfg.N, cfg.H, cfg.P);
  std::vector<Image> bitmaps;
  std::vector<double> radius;
  for (const auto& s : cfg.sprites) {
    bitmaps.push_back(detail::sprite_bitmap(s));
    const auto& b = bitmaps.back();
    const double half = 0.5 * std::hypot(b.rows(), b.cols());
    const double smax = std::max(s.scale, s.scale + s.scale_rate * (cfg.frames - 1));
    radius.push_back(half * std::max(smax, 0.0));
    if (2 * radius.back() >= std::min(cfg.height, cfg.width))
      throw ValidationError("scene: sprite larger than frame");
  }
  std::optional<ProceduralTexture> tex;
  if (cfg.background == Background::texture) {
    TextureSpec ts = cfg.texture;
    if (cfg.seed != 0) ts.seed ^= std::mt19937_64(cfg.seed)();
    tex.emplace(ts);
  }

  Scene sc;
  std::vector<SpritePose> pose;
  for (const auto& s : cfg.sprites) pose.push_back({s.x, s.y, s.angle, s.scale, s.vx, s.vy});
  std::vector<std::array<double, 2>> vel;
  for (const auto& s : cfg.sprites) vel.push_back({s.vx, s.vy});

  for (int t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      for (std::size_t i = 0; i < pose.size(); ++i) {
        auto& p = pose[i];
        const auto& s = cfg.sprites[i];
        const double ox = p.x, oy = p.y;
        p.x += vel[i][0];
        p.y += vel[i][1];
        p.angle += s.angular_velocity;
        p.scale = std::max(0.2, p.scale + s.scale_rate);
        const double lo = radius[i];
        auto keep_in = [&](double& x, double& v, double hi) {
          if (cfg.bounce) {
            if (x < lo) {
              x = 2 * lo - x;
              v = -v;
            } else if (x > hi) {
              x = 2 * hi - x;
              v = -v;
            }
          }
          x = std::clamp(x, lo, hi);
        };
        keep_in(p.x, vel[i][0], cfg.width - 1 - lo);
        keep_in(p.y, vel[i][1], cfg.height - 1 - lo);
        p.vx = p.x - ox;
        p.vy = p.y - oy;
      }
    }
    sc.truth.poses.push_back(pose);

    Image img = tex ? tex->render(cfg.height, cfg.width, t * cfg.texture.vy, t * cfg.texture.vx)
                    : Image(cfg.height, cfg.width, 0.0);
    Plane<std::uint8_t> mask(cfg.height, cfg.width, 0);
    Plane<int> owner(cfg.height, cfg.width, -1);
    for (std::size_t i = 0; i < pose.size(); ++i) {
      const auto& p = pose[i];
      const auto& b = bitmaps[i];
      const double th = -p.angle * std::numbers::pi / 180.0;
      const double ct = std::cos(th), st = std::sin(th);
      const double br = (b.rows() - 1) / 2.0, bc = (b.cols() - 1) / 2.0;
      const int r0 = std::max(0, static_cast<int>(std::floor(p.y - radius[i])) - 1);
      const int r1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(p.y + radius[i])) + 1);
      const int c0 = std::max(0, static_cast<int>(std::floor(p.x - radius[i])) - 1);
      const int c1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(p.x + radius[i])) + 1);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
          const double dx = c - p.x, dy = r - p.y;
          const double lx = (ct * dx - st * dy) / p.scale, ly = (st * dx + ct * dy) / p.scale;
          const double a = detail::bilinear(b, ly + br, lx + bc);
          if (a <= 0.0) continue;
          img(r, c) = a * cfg.sprites[i].intensity + (1 - a) * img(r, c);
          if (a >= 0.5) {
            mask(r, c) = 1;
            owner(r, c) = static_cast<int>(i);
          }
        }
    }

    VelocityField vf(grid);
    for (int u = 0; u < grid.LU; ++u)
      for (int v = 0; v < grid.LV; ++v) {
        const int l = grid.cell_index(u, v);
        std::vector<int> count(pose.size(), 0);
        const int cr = grid.center_row(u), cc = grid.center_col(v);
        for (int r = cr - cfg.N / 2; r <= cr + cfg.N / 2; ++r)
          for (int c = cc - cfg.N / 2; c <= cc + cfg.N / 2; ++c)
            if (r >= 0 && c >= 0 && r < cfg.height && c < cfg.width && owner(r, c) >= 0) ++count[owner(r, c)];
        const auto best = std::max_element(count.begin(), count.end());
        if (best != count.end() && *best > 0) {
          const auto& p = pose[best - count.begin()];
          vf.vx[l] = p.vx;
          vf.vy[l] = p.vy;
        } else if (tex) {
          vf.vx[l] = cfg.texture.vx;
          vf.vy[l] = cfg.texture.vy;
        } else {
          vf.low_energy[l] = 1;
        }
      }
    sc.truth.masks.push_back(std::move(mask));
    sc.truth.velocity.push_back(std::move(vf));
    sc.images.push_back(std::move(img));
  }
  std::vector<Frame> frames;
  for (const auto& im : sc.images) frames.push_back(to_frame(im));
  sc.sequence = FrameSequence(std::move(frames), cfg.seed_count);
  return sc;
}

/// Random multi-sprite dataset: sequence i is a deterministic function of
/// (seed, i).
struct DatasetConfig {
  int sequences = 100;
  int height = 64, width = 64, frames = 10, seed_count = 2;
  int sprites = 2;
  double size_min = 5.0, size_max = 8.0;
  double speed_min = 0.5, speed_max = 2.0;
  double angular_velocity_max = 0.0;
  double scale_rate_max = 0.0;
  Background background = Background::black;
  int N = 15, H = 7, P = 4;
  std::uint64_t seed = 0;
};

inline SceneConfig dataset_scene(const DatasetConfig& d, int index) {
  std::seed_seq ss{static_cast<std::uint32_t>(d.seed), static_cast<std::uint32_t>(d.seed >> 32),
                   static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(ss);
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U01(rng); };
  SceneConfig c;
  c.height = d.height;
  c.width = d.width;
  c.frames = d.frames;
  c.seed_count = d.seed_count;
  c.background = d.background;
  c.texture.seed = rng();
  c.N = d.N;
  c.H = d.H;
  c.P = d.P;
  c.seed = d.seed;
  for (int i = 0; i < d.sprites; ++i) {
    SpriteSpec s;
    const int kind = static_cast<int>(rng() % 3);
    s.shape = static_cast<ShapeKind>(kind);
    s.size = uni(d.size_min, d.size_max);
    s.vertices = 3 + static_cast<int>(rng() % 4);
    s.glyph = static_cast<char>('0' + rng() % 10);
    s.intensity = uni(0.6, 1.0);
    const double margin = 1.5 * s.size + 3;
    s.x = uni(margin, d.width - 1 - margin);
    s.y = uni(margin, d.height - 1 - margin);
    const double sp = uni(d.speed_min, d.speed_max), th = uni(0.0, 2 * std::numbers::pi);
    s.vx = sp * std::cos(th);
    s.vy = sp * std::sin(th);
    s.angle = uni(0.0, 360.0);
    s.angular_velocity = uni(-d.angular_velocity_max, d.angular_velocity_max);
    s.scale_rate = uni(-d.scale_rate_max, d.scale_rate_max);
    c.sprites.push_back(s);
  }
  return c;
}

}  // namespace lfdtn

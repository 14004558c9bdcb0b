#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace lfdtn;

namespace {

SceneConfig one_sprite(ShapeKind k, double vx, double vy) {
  SceneConfig c;
  SpriteSpec s;
  s.shape = k;
  s.x = 20, s.y = 24, s.vx = vx, s.vy = vy, s.size = 6;
  c.sprites = {s};
  return c;
}

}  // namespace

TEST(Scene, ZeroVelocityFramesIdentical) {
  for (auto k : {ShapeKind::disc, ShapeKind::polygon, ShapeKind::glyph}) {
    auto c = one_sprite(k, 0, 0);
    c.background = Background::texture;
    auto sc = gen_sequence(c);
    for (std::size_t t = 1; t < sc.images.size(); ++t) EXPECT_EQ(sc.images[t], sc.images[0]);
  }
}

TEST(Scene, IntegerShiftIsExactCopy) {
  auto c = one_sprite(ShapeKind::polygon, 1.0, 0.0);
  c.sprites[0].angle = 17.0;
  auto sc = gen_sequence(c);
  for (std::size_t t = 1; t < 5; ++t) {
    double e = 0.0;
    for (int r = 0; r < 64; ++r)
      for (int q = 1; q < 64; ++q) e = std::max(e, std::abs(sc.images[t](r, q) - sc.images[t - 1](r, q - 1)));
    EXPECT_LE(e, 1e-6) << t;
  }
}

TEST(Scene, TextureTranslatesGlobally) {
  SceneConfig c;
  c.background = Background::texture;
  c.texture.vx = 2.0;
  c.texture.vy = -1.0;
  auto sc = gen_sequence(c);
  double e = 0.0;
  for (int r = 0; r < 63; ++r)
    for (int q = 2; q < 64; ++q) e = std::max(e, std::abs(sc.images[1](r, q) - sc.images[0](r + 1, q - 2)));
  EXPECT_LE(e, 1e-9);
  double lo = 1, hi = 0;
  for (double v : sc.images[0].vec()) lo = std::min(lo, v), hi = std::max(hi, v);
  EXPECT_GE(lo, c.texture.lo);
  EXPECT_LE(hi, c.texture.hi);
  EXPECT_GT(hi - lo, 0.4);  // reasonable contrast
}

TEST(Scene, Deterministic) {
  DatasetConfig d;
  d.background = Background::texture;
  d.seed = 42;
  auto a = gen_sequence(dataset_scene(d, 7)), b = gen_sequence(dataset_scene(d, 7));
  EXPECT_EQ(a.sequence.frames, b.sequence.frames);
  EXPECT_EQ(a.truth.masks, b.truth.masks);
  auto c = gen_sequence(dataset_scene(d, 8));
  EXPECT_NE(a.sequence.frames, c.sequence.frames);
  d.seed = 43;
  EXPECT_NE(gen_sequence(dataset_scene(d, 7)).sequence.frames, a.sequence.frames);
}

TEST(Scene, SceneSeedChangesTexture) {
  SceneConfig c;
  c.background = Background::texture;
  auto a = gen_sequence(c);
  c.seed = 9;
  auto b = gen_sequence(c);
  EXPECT_NE(a.images[0], b.images[0]);
}

TEST(Scene, GroundTruthVelocityInsideSprite) {
  auto c = one_sprite(ShapeKind::disc, 1.25, -0.5);
  c.sprites[0].size = 16;
  c.sprites[0].x = 28, c.sprites[0].y = 28;
  auto sc = gen_sequence(c);
  auto g = plan_grid(64, 64, 15, 7, 4);
  int checked = 0, background = 0;
  for (int u = 0; u < g.LU; ++u)
    for (int v = 0; v < g.LV; ++v) {
      const int l = g.cell_index(u, v), cr = g.center_row(u), cc = g.center_col(v);
      bool inside = cr - 7 >= 0 && cc - 7 >= 0 && cr + 7 < 64 && cc + 7 < 64, empty = true;
      for (int r = cr - 7; r <= cr + 7; ++r)
        for (int q = cc - 7; q <= cc + 7; ++q) {
          const bool in = r >= 0 && q >= 0 && r < 64 && q < 64 && sc.truth.masks[1](r, q);
          inside = inside && in;
          empty = empty && !in;
        }
      if (inside) {
        EXPECT_NEAR(sc.truth.velocity[1].vx[l], 1.25, 1e-12);
        EXPECT_NEAR(sc.truth.velocity[1].vy[l], -0.5, 1e-12);
        ++checked;
      }
      if (empty) {
        EXPECT_EQ(sc.truth.velocity[1].vx[l], 0.0);
        EXPECT_EQ(sc.truth.velocity[1].low_energy[l], 1);
        ++background;
      }
    }
  EXPECT_GT(checked, 0);
  EXPECT_GT(background, 0);
}

TEST(Scene, MasksAndPoses) {
  auto c = one_sprite(ShapeKind::disc, 1.5, 0.5);
  auto sc = gen_sequence(c);
  ASSERT_EQ(sc.truth.masks.size(), 10u);
  EXPECT_EQ(sc.truth.masks[0].rows(), 64);
  EXPECT_NEAR(sc.truth.poses[3][0].x, 20 + 3 * 1.5, 1e-12);
  EXPECT_NEAR(sc.truth.poses[3][0].y, 24 + 3 * 0.5, 1e-12);
  long n = 0;
  for (auto v : sc.truth.masks[0].vec()) n += v;
  EXPECT_NEAR(static_cast<double>(n), 3.14159 * 36, 15.0);
}

TEST(Scene, BounceKeepsSpriteInside) {
  auto c = one_sprite(ShapeKind::disc, 4.0, 3.0);
  c.frames = 40;
  auto sc = gen_sequence(c);
  bool reversed = false;
  for (const auto& p : sc.truth.poses) {
    EXPECT_GE(p[0].x, 6.0);
    EXPECT_LE(p[0].x, 63 - 6.0);
    reversed = reversed || p[0].vx < 0;
  }
  EXPECT_TRUE(reversed);
  c.bounce = false;
  auto cl = gen_sequence(c);
  EXPECT_DOUBLE_EQ(cl.truth.poses.back()[0].vx, 0.0);
}

TEST(Scene, OcclusionOrder) {
  SceneConfig c;
  SpriteSpec a, b;
  a.x = b.x = 30, a.y = b.y = 30, a.size = b.size = 5;
  a.intensity = 0.4, b.intensity = 0.9;
  c.sprites = {a, b};
  auto sc = gen_sequence(c);
  EXPECT_NEAR(sc.images[0](30, 30), 0.9, 1e-12);
}

TEST(Scene, Validation) {
  auto c = one_sprite(ShapeKind::disc, 5.0, 0.0);
  EXPECT_THROW(gen_sequence(c), ValidationError);  // faster than P
  c = one_sprite(ShapeKind::disc, 0, 0);
  c.sprites[0].size = 40;
  EXPECT_THROW(gen_sequence(c), ValidationError);
  c = one_sprite(ShapeKind::polygon, 0, 0);
  c.sprites[0].vertices = 2;
  EXPECT_THROW(gen_sequence(c), ValidationError);
  c = one_sprite(ShapeKind::disc, 0, 0);
  c.seed_count = 1;
  EXPECT_THROW(gen_sequence(c), ValidationError);
  EXPECT_THROW(parse_shape_kind("star"), ValidationError);
}

TEST(Scene, GlyphFromStamp) {
  auto dir = testutil::scratch_dir("stamp");
  std::vector<float> px(5 * 3, 0.0f);
  px[7] = 1.0f;  // single bright center pixel
  write_pgm(Frame(5, 3, px), dir / "dot.pgm");
  SceneConfig c;
  SpriteSpec s;
  s.shape = ShapeKind::glyph;
  s.stamp = (dir / "dot.pgm").string();
  s.x = 30, s.y = 30;
  c.sprites = {s};
  auto sc = gen_sequence(c);
  double total = 0.0;
  for (double v : sc.images[0].vec()) total += v;
  EXPECT_GT(total, 0.0);
}

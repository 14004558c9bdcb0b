#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace lfdtn;

namespace {

Image constant(int r, int c, double v) {
  Image x(r, c);
  for (auto& p : x.vec()) p = v;
  return x;
}

Scene sprite_over_texture(double vx, double vy, int frames = 10) {
  SceneConfig c;
  c.frames = frames;
  c.background = Background::texture;
  c.texture.seed = 10;
  SpriteSpec s;
  s.x = 22, s.y = 26, s.vx = vx, s.vy = vy, s.size = 7;
  c.sprites = {s};
  return gen_sequence(c);
}

}  // namespace

TEST(MotionSeg, Composite) {
  auto fg = constant(2, 2, 1.0), bg = constant(2, 2, 0.2), a = constant(2, 2, 0.25);
  auto f = composite(fg, bg, a);
  EXPECT_DOUBLE_EQ(f(1, 1), 0.25 + 0.75 * 0.2);
  EXPECT_THROW(composite(fg, constant(3, 2, 0), a), ValidationError);
}

TEST(MotionSeg, CorrectionIsGradientStep) {
  // each hard-wired update equals -eta times the analytic partial of
  // 0.5*sum(e^2) + lambda*sum|A|; compare with central differences
  const int n = 12;
  auto fg = testutil::random_image(n, n, 1), bg = testutil::random_image(n, n, 2);
  auto a = testutil::random_image(n, n, 3), obs = testutil::random_image(n, n, 4);
  for (auto& v : a.vec()) v = 0.1 + 0.8 * v;  // away from the clamp and |A| kinks
  auto g = plan_grid(15, 15, 15, 7, 4);
  SegState s{fg, bg, a, identity_pd(g), 0};
  SegPrediction p{fg, a, composite(fg, bg, a), VelocityField(g), 0};
  SegGains gn;
  gn.fg = 0.3, gn.bg = 0.4, gn.a = 0.2, gn.lambda_a = 0.05;
  auto out = seg_correct(s, p, obs, gn);
  const double h = 1e-6;
  int bad = 0;
  auto check = [&](double analytic, double fd) { bad += std::abs(analytic - fd) > 1e-10 + 1e-4 * std::abs(fd); };
  for (std::size_t i = 0; i < fg.size(); ++i) {
    auto J = [&](const Image& f, const Image& b, const Image& al) { return seg_objective(f, b, al, obs, gn.lambda_a); };
    auto fp = fg, fm = fg;
    fp[i] += h, fm[i] -= h;
    check((fg[i] - out.fg[i]) / gn.fg, (J(fp, bg, a) - J(fm, bg, a)) / (2 * h));
    auto bp = bg, bm = bg;
    bp[i] += h, bm[i] -= h;
    check((bg[i] - out.bg[i]) / gn.bg, (J(fg, bp, a) - J(fg, bm, a)) / (2 * h));
    auto ap = a, am = a;
    ap[i] += h, am[i] -= h;
    const double step = a[i] - out.a[i];
    if (out.a[i] > 0.0 && out.a[i] < 1.0) check(step / gn.a, (J(fg, bg, ap) - J(fg, bg, am)) / (2 * h));
  }
  EXPECT_EQ(bad, 0);
  EXPECT_EQ(out.t, 1);
}

TEST(MotionSeg, CorrectionFixedPoint) {
  auto g = plan_grid(15, 15, 15, 7, 4);
  auto fg = testutil::random_image(15, 15, 5), bg = testutil::random_image(15, 15, 6);
  auto a = testutil::random_image(15, 15, 7);
  SegState s{fg, bg, a, identity_pd(g), 3};
  SegPrediction p{fg, a, composite(fg, bg, a), VelocityField(g), 0};
  SegGains gn;
  gn.lambda_a = 0.0;
  auto out = seg_correct(s, p, p.frame, gn);
  EXPECT_EQ(out.fg, fg);
  EXPECT_EQ(out.bg, bg);
  EXPECT_EQ(out.a, a);
}

TEST(MotionSeg, CorrectionClampsAlpha) {
  auto g = plan_grid(15, 15, 15, 7, 4);
  SegState s{constant(15, 15, 1.0), constant(15, 15, 0.0), constant(15, 15, 0.99), identity_pd(g), 0};
  SegPrediction p{s.fg, s.a, composite(s.fg, s.bg, s.a), VelocityField(g), 0};
  SegGains gn;
  gn.a = 10.0;
  auto out = seg_correct(s, p, constant(15, 15, 0.0), gn);
  for (double v : out.a.vec()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(seg_correct(s, p, Image(3, 3), gn), ValidationError);
}

TEST(MotionSeg, StaticPredictionKeepsState) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto fg = testutil::random_image(64, 64, 8);
  auto a = constant(64, 64, 0.5);
  SegState s{fg, constant(64, 64, 0.3), a, identity_pd(pl.grid), 0};
  auto p = seg_predict(s, pl);
  EXPECT_LE(testutil::max_abs_diff(p.fg, fg, pl.grid.image_pad), 1e-3);
  EXPECT_LE(testutil::max_abs_diff(p.a, a, pl.grid.image_pad), 1e-3);
}

TEST(MotionSeg, PredictionTransportsAlongTransform) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto sc = sprite_over_texture(2.0, 0.0);
  auto a = constant(64, 64, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = sc.truth.masks[1][i];
  VelocityField vf(pl.grid);
  std::fill(vf.vx.begin(), vf.vx.end(), 2.0);
  SegState s{sc.images[1], constant(64, 64, 0.0), a, velocity_to_pd(vf), 1};
  auto p = seg_predict(s, pl);
  auto mass_x = [](const Image& m) {
    double t = 0.0, sx = 0.0;
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) t += m(r, c), sx += m(r, c) * c;
    return sx / t;
  };
  // the transform is re-estimated through the bottleneck, so only the
  // direction is exact
  EXPECT_GT(mass_x(p.a), mass_x(a) + 0.5);
}

TEST(MotionSeg, InitializationFromSeeds) {
  auto sc = sprite_over_texture(2.0, 1.0);
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  SegInit c;
  std::vector<Image> frames = sc.images;
  auto s = seg_initialize(frames, 3, 2, pl, c);
  EXPECT_EQ(s.t, 2);
  EXPECT_EQ(s.fg, frames[2]);
  // median of three seeds
  std::vector<double> v{frames[0][100], frames[1][100], frames[2][100]};
  std::sort(v.begin(), v.end());
  EXPECT_DOUBLE_EQ(s.bg[100], v[1]);
  // alpha is high on the moving sprite, low far away from it
  const auto& m = sc.truth.masks[2];
  double in = 0.0, out = 0.0;
  int ni = 0, no = 0;
  for (int r = 0; r < 64; ++r)
    for (int q = 0; q < 64; ++q) {
      if (m(r, q)) in += s.a(r, q), ++ni;
      if (std::abs(r - 28) > 20 && std::abs(q - 26) > 20) out += s.a(r, q), ++no;
    }
  EXPECT_GT(in / ni, 0.5);
  EXPECT_LT(out / no, 0.1);
}

TEST(MotionSeg, UpdateLtIsUnitModulus) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto sc = sprite_over_texture(1.0, 0.0);
  auto a = constant(64, 64, 0.2);
  auto lt = seg_update_lt(identity_pd(pl.grid), sc.images[2], a, sc.images[1], a, pl, 0.7);
  for (const auto& z : lt.data) EXPECT_NEAR(std::abs(z), 1.0, 1e-9);
  // eta = 1 replaces the previous transform with the measurement
  auto m = seg_update_lt(identity_pd(pl.grid), sc.images[1], a, sc.images[1], a, pl, 1.0);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (!m.flagged[i]) {
      EXPECT_NEAR(std::abs(m.data[i] - cplx(1, 0)), 0.0, 1e-9);
    }
  }
}

TEST(MotionSeg, RunProducesAllSteps) {
  auto sc = sprite_over_texture(1.5, 0.5, 8);
  SegConfig cfg;
  cfg.horizon = 3;
  auto r = seg_run(sc.images, 2, cfg);
  ASSERT_EQ(r.steps.size(), 1u + 6u + 3u);
  EXPECT_FALSE(r.steps[0].corrected);
  EXPECT_TRUE(r.steps[1].corrected);
  EXPECT_FALSE(r.steps.back().corrected);
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    EXPECT_EQ(r.steps[k].state.t, 1 + static_cast<int>(k));
    for (double v : r.steps[k].state.a.vec()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  cfg.observe = 4;
  EXPECT_EQ(seg_run(sc.images, 2, cfg).steps.size(), 1u + 2u + 3u);
  cfg.observe = 1;
  EXPECT_THROW(seg_run(sc.images, 2, cfg), ValidationError);
  EXPECT_THROW(seg_run(sc.images, 1, SegConfig{}), ValidationError);
}

TEST(MotionSeg, AlphaIou) {
  Image a(2, 2);
  a[0] = 0.9, a[1] = 0.6, a[2] = 0.1, a[3] = 0.0;
  Plane<std::uint8_t> m(2, 2, std::vector<std::uint8_t>{1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(alpha_iou(a, m), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(alpha_iou(Image(2, 2), Plane<std::uint8_t>(2, 2, std::vector<std::uint8_t>(4, 0))), 1.0);
}

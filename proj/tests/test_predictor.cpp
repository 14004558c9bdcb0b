#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace lfdtn;

namespace {

Scene sprite_scene(double x, double y, double vx, double vy, int frames = 10) {
  SceneConfig c;
  c.frames = frames;
  SpriteSpec s;
  s.x = x, s.y = y, s.vx = vx, s.vy = vy, s.size = 7;
  c.sprites = {s};
  return gen_sequence(c);
}

}  // namespace

TEST(Predictor, StaticSceneIsFixedPoint) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto x = testutil::random_image(64, 64, 1);
  auto r = predict_next_frame(x, x, pl, TMHandle{});
  EXPECT_LE(testutil::max_abs_diff(r.prediction, x, pl.grid.image_pad), 1e-3);
  for (int l = 0; l < pl.grid.L; ++l) {
    EXPECT_NEAR(r.raw.vx[l], 0.0, 1e-9);
    EXPECT_NEAR(r.raw.vy[l], 0.0, 1e-9);
  }
}

TEST(Predictor, StaticRolloutStaysPut) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto x = testutil::random_image(64, 64, 2);
  std::vector<Image> seeds{x, x};
  auto ro = rollout(seeds, 8, pl, TMHandle{});
  ASSERT_EQ(ro.predictions.size(), 8u);
  ASSERT_EQ(ro.raw.size(), 8u);
  EXPECT_LE(testutil::max_abs_diff(ro.predictions.back(), x, pl.grid.image_pad), 1e-2);
}

TEST(Predictor, OutputInUnitRange) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto a = testutil::random_image(64, 64, 3), b = testutil::random_image(64, 64, 4);
  auto r = predict_next_frame(a, b, pl, TMHandle{});
  for (double v : r.prediction.vec()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Predictor, MovesSpriteInTheRightDirection) {
  auto sc = sprite_scene(24, 30, 2.0, 0.0);
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  auto r = predict_next_frame(sc.images[0], sc.images[1], pl, TMHandle{});
  auto centroid_x = [](const Image& im) {
    double m = 0.0, s = 0.0;
    for (int rr = 0; rr < im.rows(); ++rr)
      for (int c = 0; c < im.cols(); ++c) m += im(rr, c), s += im(rr, c) * c;
    return s / m;
  };
  EXPECT_GT(centroid_x(r.prediction), centroid_x(sc.images[1]) + 0.5);
  EXPECT_LT(centroid_x(r.prediction), centroid_x(sc.images[1]) + 2.5);
  // the prediction beats repeating the last frame
  EXPECT_LT(mse(r.prediction, sc.images[2]), mse(sc.images[1], sc.images[2]));
}

TEST(Predictor, TranslationEquivarianceForGridMultiples) {
  PredictorConfig pc;
  auto pl = Pipeline::make(pc, 64, 64);
  auto a = sprite_scene(22, 24, 1.25, -0.75, 3), b = sprite_scene(22 + pc.H, 24 + 2 * pc.H, 1.25, -0.75, 3);
  auto ra = predict_next_frame(a.images[0], a.images[1], pl, TMHandle{});
  auto rb = predict_next_frame(b.images[0], b.images[1], pl, TMHandle{});
  double e = 0.0;
  for (int r = 0; r < 64 - 2 * pc.H; ++r)
    for (int c = 0; c < 64 - pc.H; ++c) e = std::max(e, std::abs(rb.prediction(r + 2 * pc.H, c + pc.H) - ra.prediction(r, c)));
  EXPECT_LE(e, 1e-9);
}

TEST(Predictor, HistoryFeedsTransformModel) {
  auto sc = sprite_scene(20, 20, 1.0, 1.0);
  PredictorConfig pc;
  auto pl = Pipeline::make(pc, 64, 64);
  TMArch arch;
  auto p = init_tm_params(arch, 4);
  auto L = p.layout();
  p.values[L.proj_b] = 0.5;  // constant +0.5 px/frame in x
  std::vector<Image> seeds(sc.images.begin(), sc.images.begin() + 3);
  auto ro = rollout(seeds, 2, pl, TMHandle{p});
  int moving = 0;
  for (int l = 0; l < pl.grid.L; ++l) {
    // cells without energy get no transport at all
    const double expect = ro.raw[0].low_energy[l] ? -ro.raw[0].vx[l] : 0.5;
    EXPECT_NEAR(ro.refined[0].vx[l] - ro.raw[0].vx[l], expect, 1e-12);
    moving += !ro.raw[0].low_energy[l];
  }
  EXPECT_GT(moving, 0);
}

TEST(Predictor, CopyLastBaseline) {
  auto x = testutil::random_image(8, 8, 1), y = testutil::random_image(8, 8, 2);
  std::vector<Image> seeds{x, y};
  auto c = copy_last_rollout(seeds, 3);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[2], y);
}

TEST(Predictor, Validation) {
  auto pl = Pipeline::make(PredictorConfig{}, 64, 64);
  std::vector<Image> one{Image(64, 64)};
  EXPECT_THROW(rollout(one, 2, pl, TMHandle{}), ValidationError);
  std::vector<Image> two{Image(64, 64), Image(64, 64)};
  EXPECT_THROW(rollout(two, -1, pl, TMHandle{}), ValidationError);
  EXPECT_TRUE(rollout(two, 0, pl, TMHandle{}).predictions.empty());
  EXPECT_THROW(predict_next_frame(Image(64, 64), Image(50, 64), pl, TMHandle{}), ValidationError);
  PredictorConfig bad;
  bad.window = WindowKind::gaussian;
  bad.sigma_t = 0.01;
  bad.H = 15;
  EXPECT_THROW(Pipeline::make(bad, 61, 61), ValidationError);
}

TEST(Predictor, ModelWithWrongRRejected) {
  PredictorConfig pc;
  pc.R = 2;
  auto pl = Pipeline::make(pc, 64, 64);
  auto x = testutil::random_image(64, 64, 5);
  EXPECT_THROW(predict_next_frame(x, x, pl, TMHandle{init_tm_params(TMArch{}, 0)}), ValidationError);
}

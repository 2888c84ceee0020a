#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "endodepth/random.h"
#include "endodepth/teaching.h"
#include "test_util.h"

namespace endodepth {
namespace {

DepthMap Scaled(const DepthMap& d, double a) {
  DepthMap out = d;
  for (double& v : out.mutable_data()) v *= a;
  return out;
}

TEST(CrossTeaching, Examples) {
  const DepthMap d = testing::RandomDepth(8, 6, 40, 150, 1);
  EXPECT_EQ(CrossTeachingLoss(d, d).value, 0.0);
  EXPECT_NEAR(CrossTeachingLoss(DepthMap(4, 4, 3.0), DepthMap(4, 4, 1.0), 0.0).value, 0.5, 1e-15);
  EXPECT_NEAR(CrossTeachingLoss(DepthMap(4, 4, 3.0), DepthMap(4, 4, 1.0)).value, 2.0 / (4.0 + 1e-7), 1e-15);
  const ConsistencyLoss l = CrossTeachingLoss(d, d);
  EXPECT_EQ(l.tag.blocked, Operand::kSecond);
  EXPECT_EQ(l.evaluated, 48u);
}

TEST(CrossTeaching, ScaleInvariantSymmetricBounded) {
  const DepthMap a = testing::RandomDepth(9, 7, 40, 150, 2);
  const DepthMap b = testing::RandomDepth(9, 7, 40, 150, 3);
  const double base = CrossTeachingLoss(a, b, 0.0).value;
  for (double s : {0.01, 2.5, 1000.0}) {
    EXPECT_NEAR(CrossTeachingLoss(Scaled(a, s), Scaled(b, s), 0.0).value, base, 1e-12);
    EXPECT_NEAR(CrossTeachingLoss(Scaled(a, s), Scaled(b, s), 1e-7 * s).value,
                CrossTeachingLoss(a, b).value, 1e-12);
  }
  EXPECT_NEAR(CrossTeachingLoss(b, a).value, CrossTeachingLoss(a, b).value, 1e-15);
  for (double v : CrossTeachingLoss(a, b).map.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(CrossTeaching, RejectsBadInput) {
  DepthMap bad(3, 3, 5.0);
  bad.mutable_data()[4] = -1.0;
  EXPECT_THROW(CrossTeachingLoss(bad, DepthMap(3, 3, 1.0)), std::invalid_argument);
  EXPECT_THROW(CrossTeachingLoss(DepthMap(3, 3, 1.0), DepthMap(4, 3, 1.0)), std::invalid_argument);
}

TEST(CrossTeaching, GradientBlocksTeacher) {
  const DepthMap s = testing::RandomDepth(6, 5, 40, 150, 4);
  const DepthMap t = testing::RandomDepth(6, 5, 40, 150, 5);
  const double h = 1e-4;
  const ConsistencyGradient g = CrossTeachingGradient(s, t, kConsistencyEps, h);
  for (double v : g.wrt_second.values) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < s.pixel_count(); ++i) {
    if (g.wrt_first.kinks[i]) continue;
    DepthMap p = s, m = s;
    p.mutable_data()[i] += h;
    m.mutable_data()[i] -= h;
    const double fd = (CrossTeachingLoss(p, t).value - CrossTeachingLoss(m, t).value) / (2 * h);
    EXPECT_NEAR(g.wrt_first.values[i], fd, 1e-9);
  }
}

TEST(SelfTeaching, Examples) {
  const DepthMap d = testing::RandomDepth(8, 8, 40, 150, 6);
  EXPECT_EQ(SelfTeachingLoss(d, Scaled(d, 2.0), OcclusionMask(8, 8, false)).value, 0.0);
  EXPECT_EQ(SelfTeachingLoss(d, d, OcclusionMask(8, 8, true)).value, 0.0);

  OcclusionMask r(8, 8, true);
  for (int x = 0; x < 8; ++x) r.Set(x, 0, false);
  DepthMap t = d;
  std::size_t doubled = 0;
  for (int y = 1; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (x % 2 == 0) {
        t(x, y) *= 2.0;
        ++doubled;
      }
  ASSERT_EQ(doubled * 2, r.Count());
  // Pixels outside R are ignored even when they differ.
  t(3, 0) = 1.0;
  const ConsistencyLoss l = SelfTeachingLoss(d, t, r, 0.0);
  EXPECT_NEAR(l.value, 0.5 / 3.0, 1e-15);
  EXPECT_EQ(l.evaluated, r.Count());
  EXPECT_EQ(l.tag.blocked, Operand::kFirst);
}

TEST(SelfTeaching, GradientBlocksOriginal) {
  const DepthMap o = testing::RandomDepth(6, 5, 40, 150, 7);
  const DepthMap t = testing::RandomDepth(6, 5, 40, 150, 8);
  OcclusionMask r(6, 5, true);
  r.Set(2, 2, false);
  const double h = 1e-4;
  const ConsistencyGradient g = SelfTeachingGradient(o, t, r, kConsistencyEps, h);
  for (double v : g.wrt_first.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.wrt_second.values[2 * 6 + 2], 0.0);
  for (std::size_t i = 0; i < t.pixel_count(); ++i) {
    if (g.wrt_second.kinks[i]) continue;
    DepthMap p = t, m = t;
    p.mutable_data()[i] += h;
    m.mutable_data()[i] -= h;
    const double fd = (SelfTeachingLoss(o, p, r).value - SelfTeachingLoss(o, m, r).value) / (2 * h);
    EXPECT_NEAR(g.wrt_second.values[i], fd, 1e-9);
  }
}

TEST(Gamma, Examples) {
  const ImageBuffer img = testing::RandomImage(5, 5, 3, 9);
  EXPECT_EQ(GammaCorrect(img, 1.0).values(), img.values());
  const ImageBuffer q = GammaCorrect(ImageBuffer(2, 2, 1, 0.25), 2.0);
  for (double v : q.values()) EXPECT_DOUBLE_EQ(v, 0.0625);
  EXPECT_THROW(GammaCorrect(img, 0.0), std::invalid_argument);
}

TEST(ColorJitter, NeutralParamsAreIdentity) {
  const ImageBuffer img = testing::RandomImage(6, 4, 3, 10);
  const ImageBuffer out = ColorJitter(img, {});
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.values()[i], img.values()[i], 1e-12);
}

TEST(ColorJitter, BrightnessAndContrast) {
  ImageBuffer img(2, 1, 1);
  img.at(0, 0) = 0.4;
  img.at(1, 0) = 0.6;
  ColorJitterParams p;
  p.contrast = 2.0;
  const ImageBuffer c = ColorJitter(img, p);
  EXPECT_NEAR(c.at(0, 0), 0.3, 1e-12);
  EXPECT_NEAR(c.at(1, 0), 0.7, 1e-12);
  p = {};
  p.brightness = 0.5;
  const ImageBuffer b = ColorJitter(img, p);
  EXPECT_NEAR(b.at(0, 0), 0.9, 1e-12);
  EXPECT_EQ(b.at(1, 0), 1.0);
}

TEST(ColorJitter, GrayscaleUnchangedBySaturation) {
  ImageBuffer img(4, 4, 3);
  Rng rng(11);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double g = UniformUnit(rng);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = g;
    }
  for (double s : {0.0, 0.8, 1.2, 3.0}) {
    ColorJitterParams p;
    p.saturation = s;
    const ImageBuffer out = ColorJitter(img, p);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.values()[i], img.values()[i], 1e-12);
  }
}

TEST(ColorJitter, HueShiftRotatesPrimaries) {
  ImageBuffer red(1, 1, 3, 0.0);
  red.at(0, 0, 0) = 1.0;
  ColorJitterParams p;
  p.hue = 1.0 / 3.0;
  const ImageBuffer green = ColorJitter(red, p);
  EXPECT_NEAR(green.at(0, 0, 0), 0.0, 1e-12);
  EXPECT_NEAR(green.at(0, 0, 1), 1.0, 1e-12);
  EXPECT_NEAR(green.at(0, 0, 2), 0.0, 1e-12);
}

TEST(Simulator, IdentityConfig) {
  const ImageBuffer img = testing::RandomImage(16, 12, 3, 12);
  const SimulatedAppearance s = ApplyAppearanceSimulator(img, AppearanceSimConfig::Identity());
  EXPECT_TRUE(s.unoccluded.All());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(s.image.values()[i], img.values()[i], 1e-12);
}

TEST(Simulator, SeededCropReplay) {
  AppearanceSimConfig cfg = AppearanceSimConfig::Identity();
  cfg.mask_count_lo = cfg.mask_count_hi = 1;
  cfg.mask_size_lo = cfg.mask_size_hi = 4;
  cfg.seed = 1234;
  const int w = 20, h = 15;
  // Replay the documented draw order.
  Rng rng(cfg.seed);
  for (int i = 0; i < 5; ++i) UniformUnit(rng);
  UniformInt(rng, 1, 1);
  UniformInt(rng, 4, 4);
  UniformInt(rng, 4, 4);
  const int x0 = UniformInt(rng, 0, w - 4), y0 = UniformInt(rng, 0, h - 4);

  const ImageBuffer img = testing::RandomImage(w, h, 1, 13);
  const SimulatedAppearance s = ApplyAppearanceSimulator(img, cfg);
  ASSERT_EQ(s.params.crops.size(), 1u);
  EXPECT_EQ(s.params.crops[0].x, x0);
  EXPECT_EQ(s.params.crops[0].y, y0);
  EXPECT_EQ(s.unoccluded.Count(), static_cast<std::size_t>(w * h - 16));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool inside = x >= x0 && x < x0 + 4 && y >= y0 && y < y0 + 4;
      EXPECT_EQ(s.unoccluded(x, y), !inside);
      EXPECT_EQ(s.image.at(x, y), inside ? 0.0 : img.at(x, y));
    }
}

TEST(Simulator, SeededRunsAreBitReproducible) {
  AppearanceSimConfig cfg;
  cfg.seed = 99;
  const ImageBuffer img = testing::RandomImage(40, 30, 3, 14);
  const SimulatedAppearance a = ApplyAppearanceSimulator(img, cfg);
  const SimulatedAppearance b = ApplyAppearanceSimulator(img, cfg);
  EXPECT_EQ(a.image.values(), b.image.values());
  for (std::size_t i = 0; i < a.unoccluded.size(); ++i) EXPECT_EQ(a.unoccluded[i], b.unoccluded[i]);
  EXPECT_GE(a.params.gamma, cfg.gamma_lo);
  EXPECT_LE(a.params.gamma, cfg.gamma_hi);
  EXPECT_GE(a.params.crops.size(), 1u);
  EXPECT_LE(a.params.crops.size(), 3u);
  cfg.seed = 100;
  EXPECT_NE(ApplyAppearanceSimulator(img, cfg).image.values(), a.image.values());
}

TEST(Simulator, OrderIsGammaThenJitter) {
  const ImageBuffer img = testing::RandomImage(6, 6, 3, 15);
  AppearanceParams p;
  p.gamma = 1.7;
  p.jitter.brightness = 0.05;
  p.jitter.contrast = 1.1;
  const SimulatedAppearance s = ApplyAppearance(img, p);
  const ImageBuffer want = ColorJitter(GammaCorrect(img, 1.7), p.jitter);
  EXPECT_EQ(s.image.values(), want.values());
}

TEST(Simulator, ConfigValidation) {
  AppearanceSimConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.gamma_lo = 0.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = {};
  cfg.mask_size_lo = 40;
  cfg.mask_size_hi = 20;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace endodepth

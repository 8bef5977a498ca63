#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "test_support.hpp"

namespace pld {
namespace {

using testing::Rng;

// Brute-force windowed SSIM: explicit window loops with mirrored indices.
double ssim_oracle(const ImageBuffer& a, const ImageBuffer& b, int x, int y, int c, int win = 3, double c1 = 1e-4,
                   double c2 = 9e-4) {
  auto mirror = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  const int r = win / 2;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int xx = mirror(x + dx, a.width()), yy = mirror(y + dy, a.height());
      const double va = a(xx, yy, c), vb = b(xx, yy, c);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  const double n = win * win;
  const double ma = sa / n, mb = sb / n;
  const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
  return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

StereoRig rig_for(const ImageBuffer& img) { return synthetic::default_rig(img.width(), img.height()); }

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ssim_window = 4;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.ssim_weight = 1.5;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.lambda_smooth = -1;
  EXPECT_THROW(c.validate(), ArgumentError);
  EXPECT_DOUBLE_EQ(LossConfig{}.lambda_smooth, 0.001);
  EXPECT_DOUBLE_EQ(LossConfig{}.ssim_weight, 0.85);
}

TEST(Ssim, SelfSimilarityIsOne) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = testing::random_image(rng, testing::uniform_int(rng, 3, 12), testing::uniform_int(rng, 3, 12), 3);
    for (const auto out = ssim(img, img); double v : out.data()) EXPECT_NEAR(v, 1.0, 1e-9);
  }
}

TEST(Ssim, ConstantClosedForm) {
  const double a = 0.3, b = 0.7, c1 = 1e-4;
  const auto s = ssim(ImageBuffer(6, 5, 1, a), ImageBuffer(6, 5, 1, b));
  const double expect = (2 * a * b + c1) / (a * a + b * b + c1);
  for (double v : s.data()) EXPECT_NEAR(v, expect, 1e-12);
}

TEST(Ssim, MatchesBruteForceOracle) {
  Rng rng(32);
  const auto a = testing::random_image(rng, 16, 16, 2), b = testing::random_image(rng, 16, 16, 2);
  const auto s = ssim(a, b);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(s(x, y, c), ssim_oracle(a, b, x, y, c), 1e-12);
}

TEST(Ssim, WiderWindowMatchesOracle) {
  Rng rng(33);
  const auto a = testing::random_image(rng, 9, 8, 1), b = testing::random_image(rng, 9, 8, 1);
  LossConfig cfg;
  cfg.ssim_window = 5;
  const auto s = ssim(a, b, cfg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 9; ++x) EXPECT_NEAR(s(x, y), ssim_oracle(a, b, x, y, 0, 5), 1e-12);
}

TEST(Ssim, RangeAndErrors) {
  Rng rng(34);
  const auto a = testing::random_image(rng, 10, 10, 3), b = testing::random_image(rng, 10, 10, 3);
  for (const auto out = ssim(a, b); double v : out.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(ssim(a, ImageBuffer(10, 9, 3)), ArgumentError);
  EXPECT_THROW(ssim(ImageBuffer(1, 5, 1), ImageBuffer(1, 5, 1)), ArgumentError);
}

TEST(ReconstructionError, SelfIsZero) {
  Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = testing::random_image(rng, 8, 7, 3);
    for (const auto out = reconstruction_error(img, img); double v : out.data()) EXPECT_NEAR(v, 0.0, 1e-9);
  }
}

TEST(ReconstructionError, PureL1AndPureSsim) {
  Rng rng(36);
  const auto a = testing::random_image(rng, 6, 6, 3), b = testing::random_image(rng, 6, 6, 3);
  LossConfig l1;
  l1.ssim_weight = 0.0;
  const auto re = reconstruction_error(a, b, l1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const double expect = (std::abs(a(x, y, 0) - b(x, y, 0)) + std::abs(a(x, y, 1) - b(x, y, 1)) +
                             std::abs(a(x, y, 2) - b(x, y, 2))) / 3.0;
      EXPECT_NEAR(re(x, y), expect, 1e-15);
    }

  LossConfig pure;
  pure.ssim_weight = 1.0;
  const double ca = 0.2, cb = 0.6, c1 = 1e-4;
  const double s = (2 * ca * cb + c1) / (ca * ca + cb * cb + c1);
  for (const auto out = reconstruction_error(ImageBuffer(5, 5, 3, ca), ImageBuffer(5, 5, 3, ca), pure); double v : out.data())
    EXPECT_NEAR(v, 0.0, 1e-15);
  for (const auto out = reconstruction_error(ImageBuffer(5, 5, 3, ca), ImageBuffer(5, 5, 3, cb), pure); double v : out.data())
    EXPECT_NEAR(v, 0.5 * (1 - s), 1e-12);
}

TEST(ReconstructionError, DefaultMixComposition) {
  Rng rng(37);
  const auto a = testing::random_image(rng, 7, 5, 3), b = testing::random_image(rng, 7, 5, 3);
  const auto re = reconstruction_error(a, b);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      double expect = 0;
      for (int c = 0; c < 3; ++c)
        expect += 0.85 / 2 * (1 - ssim_oracle(a, b, x, y, c)) + 0.15 * std::abs(a(x, y, c) - b(x, y, c));
      EXPECT_NEAR(re(x, y), expect / 3, 1e-12);
    }
}

TEST(Reprojection, SingleSourceAndPerfectSource) {
  Rng rng(38);
  const auto t = testing::random_image(rng, 8, 6, 3);
  const auto other = testing::random_image(rng, 8, 6, 3);
  const std::vector<std::uint8_t> all(48, 1);
  const std::vector<WarpResult> one{{other, all}};
  const auto r1 = reprojection_loss(t, one);
  const auto re = reconstruction_error(t, other);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(r1.loss.data()[i], re.data()[i]);

  const std::vector<WarpResult> two{{other, all}, {t, all}};
  for (double v : reprojection_loss(t, two).loss.data()) EXPECT_NEAR(v, 0.0, 1e-9);
  EXPECT_THROW(reprojection_loss(t, std::vector<WarpResult>{}), ArgumentError);
}

TEST(Reprojection, PerPixelMinOracleWithValidity) {
  Rng rng(39);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = testing::random_image(rng, 9, 7, 3);
    std::vector<WarpResult> recs;
    for (int s = 0; s < 3; ++s) {
      WarpResult w{testing::random_image(rng, 9, 7, 3), std::vector<std::uint8_t>(63)};
      for (auto& v : w.valid) v = testing::uniform(rng, 0, 1) < 0.7;
      recs.push_back(std::move(w));
    }
    const auto r = reprojection_loss(t, recs);
    std::array<ImageBuffer, 3> re{reconstruction_error(t, recs[0].image), reconstruction_error(t, recs[1].image),
                                  reconstruction_error(t, recs[2].image)};
    for (std::size_t i = 0; i < 63; ++i) {
      double best = INFINITY;
      for (int s = 0; s < 3; ++s)
        if (recs[s].valid[i]) best = std::min(best, re[s].data()[i]);
      EXPECT_EQ(r.valid[i] != 0, std::isfinite(best));
      if (std::isfinite(best)) {
        EXPECT_EQ(r.loss.data()[i], best);
        for (int s = 0; s < 3; ++s)
          if (recs[s].valid[i]) EXPECT_LE(r.loss.data()[i], re[s].data()[i]);
      }
    }
  }
}

TEST(AutoMask, Examples) {
  Rng rng(40);
  const auto t = testing::random_image(rng, 8, 8, 3);
  const auto differ = testing::random_image(rng, 8, 8, 3);
  const std::vector<std::uint8_t> all(64, 1);
  const std::vector<WarpResult> perfect{{t, all}};
  const std::vector<ImageBuffer> raw_diff{differ};
  for (auto m : auto_mask(t, perfect, raw_diff)) EXPECT_EQ(m, 1);

  const std::vector<WarpResult> imperfect{{differ, all}};
  const std::vector<ImageBuffer> raw_same{t};
  for (auto m : auto_mask(t, imperfect, raw_same)) EXPECT_EQ(m, 0);

  LossConfig off;
  off.automask_enabled = false;
  for (auto m : auto_mask(t, imperfect, raw_same, off)) EXPECT_EQ(m, 1);
}

TEST(Smoothness, ConstantIsZero) {
  Rng rng(41);
  EXPECT_EQ(smoothness_loss(DisparityMap(6, 6, 3.0), testing::random_image(rng, 6, 6, 3)), 0.0);
}

TEST(Smoothness, RampOverConstantImage) {
  DisparityMap d(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) d(x, y) = x + 1.0;
  // mean 2.5, twelve unit x-steps: 12 / 2.5 / 16
  EXPECT_NEAR(smoothness_loss(d, ImageBuffer(4, 4, 3, 0.5)), 0.3, 1e-15);
}

TEST(Smoothness, ScaleInvariantAndErrors) {
  Rng rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const auto img = testing::random_image(rng, 10, 8, 3);
    const auto d = testing::random_disparity(rng, 10, 8, 0.1, 9.0);
    DisparityMap scaled = d;
    const double c = testing::uniform(rng, 0.01, 100.0);
    for (auto& v : scaled.values.data()) v *= c;
    EXPECT_NEAR(smoothness_loss(scaled, img), smoothness_loss(d, img), 1e-12);
  }
  EXPECT_THROW(smoothness_loss(DisparityMap(4, 4, 0.0), ImageBuffer(4, 4, 1)), ArgumentError);
  EXPECT_THROW(smoothness_loss(DisparityMap(4, 4, 1.0), ImageBuffer(4, 5, 1)), ArgumentError);
}

TEST(Smoothness, EdgeWeightsOracle) {
  Rng rng(43);
  const auto img = testing::random_image(rng, 7, 6, 3);
  const auto d = testing::random_disparity(rng, 7, 6, 0.5, 4.0);
  double mean = 0;
  for (double v : d.values.data()) mean += v;
  mean /= 42;
  double acc = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      if (x < 6) {
        double g = 0;
        for (int c = 0; c < 3; ++c) g += std::abs(img(x + 1, y, c) - img(x, y, c));
        acc += std::abs(d(x + 1, y) - d(x, y)) / mean * std::exp(-g / 3);
      }
      if (y < 5) {
        double g = 0;
        for (int c = 0; c < 3; ++c) g += std::abs(img(x, y + 1, c) - img(x, y, c));
        acc += std::abs(d(x, y + 1) - d(x, y)) / mean * std::exp(-g / 3);
      }
    }
  EXPECT_NEAR(smoothness_loss(d, img), acc / 42, 1e-14);
}

TEST(TotalLoss, IdenticalPairAtZeroDisparity) {
  Rng rng(44);
  const auto img = testing::random_image(rng, 12, 10, 3);
  const auto b = total_loss(img, DisparityMap(12, 10, 0.0), img, rig_for(img));
  EXPECT_EQ(b.photometric, 0.0);
  EXPECT_EQ(b.smoothness, 0.0);
  EXPECT_EQ(b.total, 0.0);
}

TEST(TotalLoss, LambdaZeroIsPhotometric) {
  const auto s = synthetic::make_smooth_scene(24, 16, 5);
  LossConfig cfg;
  cfg.lambda_smooth = 0.0;
  const auto b = total_loss(s.left, s.disparity, s.right, s.rig, cfg);
  EXPECT_EQ(b.total, b.photometric);
  EXPECT_GT(b.smoothness, 0.0);
}

TEST(TotalLoss, DecompositionAndNonNegativity) {
  Rng rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = synthetic::make_smooth_scene(20, 14, 100 + trial, testing::uniform(rng, 1.0, 5.0));
    LossConfig cfg;
    cfg.automask_enabled = trial % 2 == 0;
    cfg.ssim_weight = testing::uniform(rng, 0.0, 1.0);
    const auto b = total_loss(s.left, s.disparity, s.right, s.rig, cfg);
    EXPECT_GE(b.total, 0.0);
    EXPECT_NEAR(b.total, b.photometric + cfg.lambda_smooth * b.smoothness, 1e-12);
    EXPECT_GE(b.masked_fraction, 0.0);
    EXPECT_LE(b.masked_fraction, 1.0);
  }
}

TEST(TotalLoss, OptimumBeatsOffsetDisparity) {
  const auto s = synthetic::make_shifted_scene(48, 32, 4.0, 9);
  const auto at = total_loss(s.left, DisparityMap(48, 32, 4.0), s.right, s.rig);
  const auto off = total_loss(s.left, DisparityMap(48, 32, 6.0), s.right, s.rig);
  EXPECT_LT(at.total, off.total);
}

TEST(TotalLoss, EmptyInclusionSetGivesZeroPhotometric) {
  // the unwarped source matches exactly, so every pixel is masked
  const auto s = synthetic::make_shifted_scene(16, 12, 0.0, 3);
  const auto b = total_loss(s.left, DisparityMap(16, 12, 2.0), s.right, s.rig);
  EXPECT_EQ(b.masked_fraction, 1.0);
  EXPECT_EQ(b.photometric, 0.0);
}

TEST(TotalLoss, DeterministicAcrossRuns) {
  const auto s = synthetic::make_smooth_scene(32, 20, 8);
  const auto a = total_loss(s.left, s.disparity, s.right, s.rig);
  const auto b = total_loss(s.left, s.disparity, s.right, s.rig);
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.per_pixel_photometric, b.per_pixel_photometric);
}

TEST(Gradient, FlatScenePhotometricGradientIsZero) {
  const auto s = synthetic::make_flat_scene(12, 10);
  LossConfig cfg;
  cfg.lambda_smooth = 0.0;
  cfg.automask_enabled = false;
  for (const auto out = loss_gradient(s.left, s.disparity, s.right, s.rig, cfg); double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, SinglePixelFiniteDifference) {
  const auto s = synthetic::make_smooth_scene(32, 24, 17);
  LossConfig cfg;
  cfg.lambda_smooth = 0.0;
  const SourceView src{std::cref(s.right), +1};
  StereoObjective obj(s.left, {src}, s.rig, s.rig.left, cfg);
  const auto ev = obj.evaluate(s.disparity);
  const auto g = obj.gradient(s.disparity, ev);
  const double h = 1e-4;
  int checked = 0;
  for (int y = 6; y < 18 && checked < 20; y += 3)
    for (int x = 8; x < 26 && checked < 20; x += 4) {
      const double frac = (x - s.disparity(x, y)) - std::floor(x - s.disparity(x, y));
      if (frac < 3 * h || frac > 1 - 3 * h) continue;
      DisparityMap p = s.disparity, m = s.disparity;
      p(x, y) += h;
      m(x, y) -= h;
      const double fd = (obj.evaluate(p, &ev.masks).breakdown.total - obj.evaluate(m, &ev.masks).breakdown.total) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(g(x, y)), 1e-8});
      EXPECT_LT(std::abs(fd - g(x, y)) / scale, 1e-3) << "pixel " << x << "," << y;
      ++checked;
    }
  EXPECT_GE(checked, 10);
}

TEST(Gradient, VanishesAtSyntheticOptimum) {
  const int w = 48, h = 24;
  const double d0 = 4.0;
  const auto s = synthetic::make_shifted_scene(w, h, d0, 21);
  const DisparityMap d(w, h, d0);
  const auto g = loss_gradient(s.left, d, s.right, s.rig);
  for (int y = 2; y < h - 2; ++y)
    for (int x = static_cast<int>(d0) + 3; x < w - 2; ++x) EXPECT_LT(std::abs(g(x, y)), 1e-6);
}

TEST(Gradient, TwoSourcesMatchFiniteDifference) {
  const auto s = synthetic::make_smooth_scene(28, 20, 33);
  // a second view on the other side: sampled at x + d
  const synthetic::SmoothTexture tex(33);
  const ImageBuffer left_of = tex.render(28, 20, [&](int x, int y) { return -s.disparity(x, y) * 0.9; });
  const std::vector<SourceView> srcs{{std::cref(s.right), +1}, {std::cref(left_of), -1}};
  LossConfig cfg;
  StereoObjective obj(s.left, srcs, s.rig, s.rig.left, cfg);
  const auto ev = obj.evaluate(s.disparity);
  const auto g = obj.gradient(s.disparity, ev);
  const double hh = 1e-4;
  for (int y = 5; y < 15; y += 4)
    for (int x = 6; x < 22; x += 5) {
      DisparityMap p = s.disparity, m = s.disparity;
      p(x, y) += hh;
      m(x, y) -= hh;
      const double fd = (obj.evaluate(p, &ev.masks).breakdown.total - obj.evaluate(m, &ev.masks).breakdown.total) / (2 * hh);
      const double scale = std::max({std::abs(fd), std::abs(g(x, y)), 1e-8});
      EXPECT_LT(std::abs(fd - g(x, y)) / scale, 1e-3) << "pixel " << x << "," << y;
    }
}

}  // namespace
}  // namespace pld

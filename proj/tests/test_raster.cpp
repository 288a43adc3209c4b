#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "geomask/raster.hpp"
#include "oracles.hpp"

using namespace geomask;

namespace {

GrayImage random_image(std::mt19937_64& g, int w, int h) {
  std::uniform_real_distribution<float> u(0, 1);
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = u(g);
  return img;
}

std::vector<double> to_vec(const GrayImage& img) {
  std::vector<double> v;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) v.push_back(img(x, y));
  return v;
}

oracle::Aff to_aff(const AffineTransformd& t) { return {t.a(), t.b(), t.c(), t.d(), t.e(), t.f()}; }

// Smooth test pattern, long wavelength relative to the pixel grid.
GrayImage smooth_image(int w, int h) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img(x, y) = static_cast<float>(0.5 + 0.2 * std::sin(2 * oracle::kPi * x / 24.0) +
                                     0.2 * std::cos(2 * oracle::kPi * (x + y) / 30.0));
  return img;
}

bool support_inside(const Point2d& s, int w, int h) {
  return std::floor(s.x()) >= 0 && std::floor(s.y()) >= 0 && std::floor(s.x()) + 1 < w && std::floor(s.y()) + 1 < h;
}

}  // namespace

TEST(WarpImage, IdentityIsPixelIdentical) {
  std::mt19937_64 g(1);
  const GrayImage img = random_image(g, 9, 7);
  EXPECT_EQ(warp_image(img, AffineTransformd::identity(), 9, 7), img);
}

TEST(WarpImage, IntegerShiftOfRamp) {
  GrayImage ramp(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp(x, y) = static_cast<float>((x + 4 * y) / 15.0);
  const GrayImage out = warp_image(ramp, AffineTransformd::translation(1, 0), 4, 4);
  for (int y = 0; y < 4; ++y) {
    EXPECT_EQ(out(0, y), 0.0f);
    for (int x = 1; x < 4; ++x) EXPECT_EQ(out(x, y), ramp(x - 1, y));
  }
}

TEST(WarpImage, HalfPixelShiftAveragesNeighbors) {
  GrayImage img(2, 2);
  img(0, 0) = 0.2f;
  img(1, 0) = 0.6f;
  img(0, 1) = 1.0f;
  img(1, 1) = 0.4f;
  // out(q) samples src at q - 0.5, so out(1,y) averages src(0,y) and src(1,y),
  // and out(0,y) averages the zero fill with src(0,y).
  const GrayImage out = warp_image(img, AffineTransformd::translation(0.5, 0), 2, 2);
  const auto ref = oracle::warp(to_vec(img), 2, 2, {1, 0, 0, 1, 0.5, 0}, 2, 2);
  for (int y = 0; y < 2; ++y) {
    EXPECT_NEAR(out(1, y), 0.5 * (img(0, y) + img(1, y)), 1e-6);
    EXPECT_NEAR(out(0, y), 0.5 * img(0, y), 1e-6);
    for (int x = 0; x < 2; ++x) EXPECT_NEAR(out(x, y), ref[y * 2 + x], 1e-6);
  }
}

TEST(WarpImage, MatchesScalarOracle) {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> ang(-180, 180), sc(0.5, 2), tr(-6, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const GrayImage img = random_image(g, 16, 16);
    const AffineTransformd t = compose(AffineTransformd::translation(tr(g), tr(g)),
                                       AffineTransformd::similarity_about(ang(g), sc(g), Point2d(8, 8)));
    const GrayImage out = warp_image(img, t, 16, 16);
    const auto ref = oracle::warp(to_vec(img), 16, 16, to_aff(t), 16, 16);
    for (int i = 0; i < 256; ++i) ASSERT_NEAR(out.data()[i], ref[i], 1e-6) << "trial " << trial << " pixel " << i;
  }
}

TEST(WarpImage, IntegerTranslationIsExactShift) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int> d(-12, 12);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = random_image(g, 13, 11);
    const int tx = d(g), ty = d(g);
    const GrayImage out = warp_image(img, AffineTransformd::translation(tx, ty), 13, 11);
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 13; ++x) ASSERT_EQ(out(x, y), img.at_or_zero(x - tx, y - ty));
  }
}

TEST(WarpImage, OutputStaysInUnitRange) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> ang(-180, 180), sc(0.3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = random_image(g, 20, 14);
    const GrayImage out = warp_image(img, AffineTransformd::similarity_about(ang(g), sc(g), Point2d(10, 7)), 25, 18);
    EXPECT_GE(out.pixels().minCoeff(), 0.0f);
    EXPECT_LE(out.pixels().maxCoeff(), 1.0f);
  }
}

TEST(WarpImage, RoundTripRestoresInterior) {
  const int n = 48;
  const GrayImage img = smooth_image(n, n);
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> ang(-40, 40), sc(0.85, 1.2), tr(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const AffineTransformd t = compose(AffineTransformd::translation(tr(g), tr(g)),
                                       AffineTransformd::similarity_about(ang(g), sc(g), Point2d(n / 2.0, n / 2.0)));
    const AffineTransformd inv = invert(t);
    const GrayImage back = warp_image(warp_image(img, t, n, n), inv, n, n);
    int checked = 0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const Point2d mid = t(Point2d(x, y));
        if (!support_inside(mid, n, n)) continue;
        bool inside = true;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            inside = inside &&
                     support_inside(inv(Point2d(std::floor(mid.x()) + dx, std::floor(mid.y()) + dy)), n, n);
        if (!inside) continue;
        ++checked;
        ASSERT_NEAR(back(x, y), img(x, y), 0.02) << "trial " << trial << " at " << x << "," << y;
      }
    }
    EXPECT_GT(checked, n * n / 4);
  }
}

TEST(WarpImage, SingularTransformThrows) {
  const GrayImage img(4, 4);
  try {
    warp_image(img, AffineTransformd(1, 2, 2, 4, 0, 0), 4, 4);
    FAIL() << "expected SingularTransform";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularTransform);
  }
}

TEST(WarpMask, IdentityAndZero) {
  BinaryMask m(6, 5);
  m.set(1, 2, true);
  m.set(4, 4, true);
  EXPECT_EQ(warp_mask(m, AffineTransformd::identity(), 6, 5), m);
  const BinaryMask zero(6, 5);
  EXPECT_EQ(warp_mask(zero, AffineTransformd::similarity_about(33, 1.7, Point2d(2, 2)), 9, 9).count(), 0);
}

TEST(WarpMask, QuarterTurnOfSinglePixel) {
  for (int px = 0; px < 7; ++px) {
    for (int py = 0; py < 7; ++py) {
      BinaryMask m(7, 7);
      m.set(px, py, true);
      const AffineTransformd t = AffineTransformd::similarity_about(90, 1, Point2d(3, 3));
      const BinaryMask out = warp_mask(m, t, 7, 7);
      const Point2d q = t(Point2d(px, py));
      const int qx = static_cast<int>(std::lround(q.x())), qy = static_cast<int>(std::lround(q.y()));
      EXPECT_EQ(out.count(), 1);
      EXPECT_TRUE(out.get(qx, qy)) << px << "," << py;
    }
  }
  BinaryMask m(7, 7);
  m.set(5, 2, true);
  EXPECT_TRUE(warp_mask(m, AffineTransformd::similarity_about(90, 1, Point2d(3, 3)), 7, 7).get(4, 5));
}

TEST(WarpMask, CommutesWithComplementInBounds) {
  std::mt19937_64 g(9);
  std::bernoulli_distribution bit(0.4);
  std::uniform_real_distribution<double> ang(-180, 180), sc(0.6, 1.6), tr(-4, 4);
  for (int trial = 0; trial < 50; ++trial) {
    BinaryMask m(15, 12);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 15; ++x) m.set(x, y, bit(g));
    const AffineTransformd t = compose(AffineTransformd::translation(tr(g), tr(g)),
                                       AffineTransformd::similarity_about(ang(g), sc(g), Point2d(7, 6)));
    const BinaryMask a = warp_mask(m.complement(), t, 15, 12);
    const BinaryMask b = warp_mask(m, t, 15, 12).complement();
    const AffineTransformd inv = invert(t);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 15; ++x) {
        const Point2d s = inv(Point2d(x, y));
        const double sx = std::floor(s.x() + 0.5), sy = std::floor(s.y() + 0.5);
        if (sx < 0 || sy < 0 || sx >= 15 || sy >= 12) continue;
        ASSERT_EQ(a.get(x, y), b.get(x, y));
      }
    }
  }
}

TEST(RasterizeBoxes, SpecExamples) {
  EXPECT_EQ(rasterize_boxes({}, 8, 8).count(), 0);
  EXPECT_EQ(rasterize_boxes({{0, 0, 8, 8}}, 8, 8).count(), 64);
  const BinaryMask m = rasterize_boxes({{2, 2, 4, 5}}, 8, 8);
  EXPECT_EQ(m.count(), 6);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(m.get(x, y), x >= 2 && x < 4 && y >= 2 && y < 5);
}

TEST(RasterizeBoxes, ClampsOutOfBounds) {
  EXPECT_EQ(rasterize_boxes({{-5, -5, 3, 2}}, 8, 8).count(), 6);
  EXPECT_EQ(rasterize_boxes({{6, 6, 100, 100}}, 8, 8).count(), 4);
  EXPECT_EQ(rasterize_boxes({{20, 20, 30, 30}}, 8, 8).count(), 0);
}

TEST(RasterizeBoxes, CountEqualsInclusionExclusionArea) {
  std::mt19937_64 g(13);
  std::uniform_int_distribution<int> c(-4, 20), n(1, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 16, h = 14;
    BoxList boxes;
    const int k = n(g);
    while (static_cast<int>(boxes.size()) < k) {
      int x0 = c(g), x1 = c(g), y0 = c(g), y1 = c(g);
      if (x0 == x1 || y0 == y1) continue;
      boxes.push_back({double(std::min(x0, x1)), double(std::min(y0, y1)), double(std::max(x0, x1)),
                       double(std::max(y0, y1))});
    }
    long area = 0;
    for (int subset = 1; subset < (1 << k); ++subset) {
      double x0 = 0, y0 = 0, x1 = w, y1 = h;
      int members = 0;
      for (int i = 0; i < k; ++i) {
        if (!(subset >> i & 1)) continue;
        ++members;
        x0 = std::max(x0, boxes[i].x0);
        y0 = std::max(y0, boxes[i].y0);
        x1 = std::min(x1, boxes[i].x1);
        y1 = std::min(y1, boxes[i].y1);
      }
      const long a = static_cast<long>(std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0));
      area += members % 2 ? a : -a;
    }
    ASSERT_EQ(rasterize_boxes(boxes, w, h).count(), area) << "trial " << trial;
  }
}

TEST(RasterizeBoxes, FractionalEdgesUsePixelCenters) {
  // Centers 2 and 3 lie in [1.5, 3.5); 4 does not.
  const BinaryMask m = rasterize_boxes({{1.5, 0, 3.5, 1}}, 6, 2);
  EXPECT_EQ(m.count(), 2);
  EXPECT_TRUE(m.get(2, 0));
  EXPECT_TRUE(m.get(3, 0));
}

TEST(CenterCrop, SquareInputAtSameSizeIsIdentity) {
  std::mt19937_64 g(17);
  const GrayImage img = random_image(g, 12, 12);
  EXPECT_EQ(center_crop_scale(img, 12), img);
}

TEST(CenterCrop, MatchesExplicitCropThenScale) {
  std::mt19937_64 g(19);
  for (auto [w, h] : {std::pair{100, 50}, std::pair{50, 100}, std::pair{64, 40}}) {
    const GrayImage img = random_image(g, w, h);
    const int side = std::min(w, h), x0 = (w - side) / 2, y0 = (h - side) / 2;
    std::vector<double> crop;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) crop.push_back(img(x0 + x, y0 + y));
    for (int out : {32, 17}) {
      const double k = static_cast<double>(out) / side;
      const auto ref = oracle::warp(crop, side, side, {k, 0, 0, k, 0.5 * k - 0.5, 0.5 * k - 0.5}, out, out);
      const GrayImage got = center_crop_scale(img, out);
      ASSERT_EQ(got.width(), out);
      ASSERT_EQ(got.height(), out);
      for (int i = 0; i < out * out; ++i) ASSERT_NEAR(got.data()[i], ref[i], 1e-6) << w << "x" << h << " -> " << out;
    }
  }
}

TEST(Image, RejectsEmptyDimensions) {
  EXPECT_THROW(GrayImage(0, 3), Error);
  EXPECT_THROW(BinaryMask(3, 0), Error);
}

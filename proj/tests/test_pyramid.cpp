#include <gtest/gtest.h>

#include <cmath>

#include "nltmo/error.hpp"
#include "nltmo/pyramid.hpp"
#include "support.hpp"

using namespace nltmo;

namespace {

double max_abs_diff(const Raster& a, const Raster& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double dot(const Raster& a, const Raster& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST(Mirror, ReflectsWithoutRepeat) {
  EXPECT_EQ(mirror_index(-1, 5), 1);
  EXPECT_EQ(mirror_index(-2, 5), 2);
  EXPECT_EQ(mirror_index(5, 5), 3);
  EXPECT_EQ(mirror_index(6, 5), 2);
  EXPECT_EQ(mirror_index(-3, 2), 1);
  EXPECT_EQ(mirror_index(4, 1), 0);
}

TEST(Downsample, ConstantAndTiny) {
  const Raster d = downsample(Raster(7, 5, 2.5));
  EXPECT_EQ(d.width, 4);
  EXPECT_EQ(d.height, 3);
  for (double v : d.data) EXPECT_NEAR(v, 2.5, 1e-15);
  const Raster one = downsample(Raster(1, 1, 4.0));
  EXPECT_EQ(one.width, 1);
  EXPECT_EQ(one.data[0], 4.0);
}

TEST(Downsample, CenterImpulseSamplesKernel) {
  Raster x(5, 5);
  x.at(2, 2) = 1.0;
  const Raster d = downsample(x);
  ASSERT_EQ(d.width, 3);
  const double t[5] = {0.05, 0.25, 0.4, 0.25, 0.05};
  // per-axis weight: every tap whose reflected position lands on the impulse
  auto axis = [&](int i) {
    double w = 0.0;
    for (int a = -2; a <= 2; ++a) {
      int p = 2 * i + a;
      if (p < 0) p = -p;
      if (p > 4) p = 8 - p;
      if (p == 2) w += t[a + 2];
    }
    return w;
  };
  EXPECT_NEAR(d.at(1, 1), 0.4 * 0.4, 1e-15);
  EXPECT_NEAR(d.at(0, 0), 0.1 * 0.1, 1e-15);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(d.at(i, j), axis(i) * axis(j), 1e-15);
}

TEST(Upsample, ConstantZeroAndSingle) {
  const Raster u = upsample(Raster(4, 3, 1.75), 7, 5);
  for (double v : u.data) EXPECT_NEAR(v, 1.75, 1e-14);
  for (double v : upsample(Raster(3, 3), 6, 5).data) EXPECT_EQ(v, 0.0);
  const Raster s = upsample(Raster(1, 1, 3.0), 2, 2);
  for (double v : s.data) EXPECT_NEAR(v, 3.0, 1e-15);
  EXPECT_THROW(upsample(Raster(3, 3), 9, 6), ShapeError);
}

TEST(Laplacian, ShapesAndDegenerateCases) {
  std::mt19937_64 g(1);
  const LaplacianPyramid p = build_laplacian(test::random_raster(g, 16, 16, 0, 1), 4);
  ASSERT_EQ(p.size(), 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p.levels[i].width, 16 >> i);
    EXPECT_EQ(p.levels[i].height, 16 >> i);
  }
  const Raster x = test::random_raster(g, 5, 3, 0, 1);
  const LaplacianPyramid one = build_laplacian(x, 1);
  ASSERT_EQ(one.size(), 1);
  EXPECT_EQ(one.levels[0].data, x.data);
  EXPECT_THROW(build_laplacian(x, 0), ShapeError);
}

TEST(Laplacian, ConstantHasOnlyLowpass) {
  const LaplacianPyramid p = build_laplacian(Raster(11, 6, 0.8), 3);
  for (int i = 0; i < 2; ++i)
    for (double v : p.levels[i].data) EXPECT_NEAR(v, 0.0, 1e-14);
  for (double v : p.lowpass().data) EXPECT_NEAR(v, 0.8, 1e-14);
}

TEST(Laplacian, ShiftChangesOnlyLowpass) {
  std::mt19937_64 g(2);
  const Raster x = test::random_raster(g, 13, 10, 0, 1);
  Raster y = x;
  for (double& v : y.data) v += 3.0;
  const LaplacianPyramid a = build_laplacian(x, 4), b = build_laplacian(y, 4);
  for (int i = 0; i < 3; ++i) EXPECT_LT(max_abs_diff(a.levels[i], b.levels[i]), 1e-12);
  EXPECT_GT(max_abs_diff(a.lowpass(), b.lowpass()), 2.9);
}

TEST(Laplacian, PerfectReconstructionAllSizes) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(g() % 40), h = 1 + static_cast<int>(g() % 40);
    const Raster x = test::random_raster(g, w, h, -5, 5);
    for (int m = 1; m <= kMaxPyramidLevels; ++m) EXPECT_LT(max_abs_diff(collapse(build_laplacian(x, m)), x), 1e-12);
  }
}

TEST(Collapse, ZeroAndLowpassOnly) {
  LaplacianPyramid p = build_laplacian(Raster(9, 9), 3);
  for (double v : collapse(p).data) EXPECT_EQ(v, 0.0);
  for (double& v : p.levels.back().data) v = 2.0;
  for (double v : collapse(p).data) EXPECT_NEAR(v, 2.0, 1e-14);
  p.levels[1] = Raster(3, 3);
  EXPECT_THROW(collapse(p), ShapeError);
}

TEST(Normalize, ScalarCases) {
  LaplacianPyramid p;
  p.levels = {Raster(6, 6, 0.5), Raster(3, 3), Raster(2, 2, 4.86)};
  const NormalizedPyramid y = normalize_pyramid(p);
  for (double v : y.levels[0].data) EXPECT_NEAR(v, 0.5 / (0.5 + 0.17), 1e-14);
  for (double v : y.levels[1].data) EXPECT_EQ(v, 0.0);
  for (double v : y.levels[2].data) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Normalize, BoundedAndFinite) {
  std::mt19937_64 g(4);
  const LaplacianPyramid p = build_laplacian(test::random_raster(g, 20, 14, 0, 100), 5);
  const NormalizedPyramid y = normalize_pyramid(p);
  for (int i = 0; i + 1 < p.size(); ++i)
    for (std::size_t j = 0; j < p.levels[i].size(); ++j) {
      const double z = p.levels[i].data[j], v = y.levels[i].data[j];
      ASSERT_TRUE(std::isfinite(v));
      EXPECT_LE(std::abs(v), std::abs(z) / 0.17 + 1e-12);
      EXPECT_LT(std::abs(v), 1.0 / 0.05);
    }
}

// <A x, y> = <x, A^T y> for every linear operator with a hand-written adjoint.
TEST(Adjoints, InnerProductIdentity) {
  std::mt19937_64 g(5);
  for (auto [w, h] : {std::pair{9, 7}, {8, 8}, {1, 5}, {2, 3}}) {
    const Raster x = test::random_raster(g, w, h, -1, 1);
    const Raster taps_y = test::random_raster(g, w, h, -1, 1);
    EXPECT_NEAR(dot(filter_separable(x, kPyramidTaps), taps_y), dot(x, filter_separable_adjoint(taps_y, kPyramidTaps)), 1e-12);

    const Raster dy = test::random_raster(g, (w + 1) / 2, (h + 1) / 2, -1, 1);
    EXPECT_NEAR(dot(downsample(x), dy), dot(x, downsample_adjoint(dy, w, h)), 1e-12);
    EXPECT_NEAR(dot(upsample(dy, w, h), x), dot(dy, upsample_adjoint(x, dy.width, dy.height)), 1e-12);

    const LaplacianPyramid p = build_laplacian(x, 3);
    LaplacianPyramid q = p;
    for (Raster& l : q.levels) l = test::random_raster(g, l.width, l.height, -1, 1);
    double lhs = 0.0;
    for (int i = 0; i < 3; ++i) lhs += dot(p.levels[i], q.levels[i]);
    EXPECT_NEAR(lhs, dot(x, build_laplacian_adjoint(q)), 1e-12);

    const Raster c = collapse(q);
    const LaplacianPyramid ca = collapse_adjoint(x, q);
    double rhs = 0.0;
    for (int i = 0; i < 3; ++i) rhs += dot(q.levels[i], ca.levels[i]);
    EXPECT_NEAR(dot(c, x), rhs, 1e-12);
  }
}

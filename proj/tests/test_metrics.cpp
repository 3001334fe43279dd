#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nltmo/error.hpp"
#include "nltmo/metrics.hpp"
#include "support.hpp"

using namespace nltmo;

namespace {

Raster display_raster(std::mt19937_64& g, int w, int h) { return test::random_raster(g, w, h, 5.0, 300.0); }

Raster scene_raster(std::mt19937_64& g, int w, int h) {
  Raster r(w, h);
  for (double& v : r.data) v = std::pow(10.0, uniform(g, std::log10(5.0), 4.0));
  return r;
}

ExposureStack random_stack(std::mt19937_64& g, int k, int w, int h) {
  ExposureStack s;
  // smooth ramps plus texture keep the patches structured
  for (int i = 0; i < k; ++i) {
    Raster r(w, h);
    const double gain = 0.2 + 0.6 * (i + 1) / (k + 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        r.at(x, y) = std::clamp(gain * (0.5 + 0.4 * std::sin(0.7 * x + 0.3 * y)) + uniform(g, -0.1, 0.1), 0.0, 1.0);
    s.images.push_back(std::move(r));
    s.max_luminances.push_back(std::pow(10.0, 3 + i));
  }
  return s;
}

std::vector<double> nlpd_fd(const Raster& s, const Raster& i, double h) {
  return test::numeric_gradient(
      [&](const std::vector<double>& v) {
        Raster t = i;
        t.data = v;
        return nlpd(s, t);
      },
      i.data, h);
}

int sort_oracle(const std::vector<double>& c) {
  std::vector<std::pair<double, int>> v;
  for (int i = 0; i < static_cast<int>(c.size()); ++i) v.push_back({c[i], i});
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2].second;
}

}  // namespace

TEST(Nlpd, MatchesStraightLineOracle) {
  std::mt19937_64 g(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 8 + static_cast<int>(g() % 9), h = 8 + static_cast<int>(g() % 9);
    const Raster s = scene_raster(g, w, h), i = display_raster(g, w, h);
    const double lib = nlpd(s, i);
    const double ref = test::oracle::nlpd(test::oracle::to_grid(s), test::oracle::to_grid(i));
    EXPECT_NEAR(lib, ref, 1e-10) << w << "x" << h;
  }
}

TEST(Nlpd, TwoValuedPairMatchesOracle) {
  Raster s(8, 8), i(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      s.at(x, y) = x < 4 ? 10.0 : 5000.0;
      i.at(x, y) = y < 4 ? 20.0 : 250.0;
    }
  EXPECT_NEAR(nlpd(s, i), test::oracle::nlpd(test::oracle::to_grid(s), test::oracle::to_grid(i)), 1e-10);
}

TEST(Nlpd, IdentitySymmetryTransposition) {
  std::mt19937_64 g(22);
  const Raster s = scene_raster(g, 19, 12), i = display_raster(g, 19, 12);
  EXPECT_EQ(nlpd(s, s), 0.0);
  EXPECT_GT(nlpd(s, i), 0.0);
  EXPECT_DOUBLE_EQ(nlpd(s, i), nlpd(i, s));
  EXPECT_NEAR(nlpd(transpose(s), transpose(i)), nlpd(s, i), 1e-12);
}

TEST(Nlpd, RejectsBadInputs) {
  EXPECT_THROW(nlpd(Raster(8, 8, 10.0), Raster(8, 7, 10.0)), ShapeError);
  Raster bad(8, 8, 10.0);
  bad.data[5] = 0.0;
  EXPECT_THROW(nlpd(Raster(8, 8, 10.0), bad), Error);
}

TEST(Nlpd, ReferenceCacheAgrees) {
  std::mt19937_64 g(23);
  const Raster s = scene_raster(g, 14, 11), i = display_raster(g, 14, 11);
  const NlpdReference ref(s);
  EXPECT_NEAR(ref.value(i), nlpd(s, i), 1e-14);
  Raster grad;
  EXPECT_NEAR(ref.value_and_gradient(i, grad), nlpd(s, i), 1e-14);
  const Raster direct = nlpd_gradient(s, i);
  for (std::size_t k = 0; k < grad.size(); ++k) EXPECT_NEAR(grad.data[k], direct.data[k], 1e-14);

  // gamma-domain entry point: d/dx of value_gamma equals the chain rule of the plain gradient
  Raster xi = i;
  for (double& v : xi.data) v = std::pow(v, 1.0 / 2.6);
  Raster ggam;
  EXPECT_NEAR(ref.value_and_gradient_gamma(xi, ggam), nlpd(s, i), 1e-12);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    const double di_dxi = 2.6 * std::pow(xi.data[k], 1.6);
    EXPECT_NEAR(ggam.data[k], grad.data[k] * di_dxi, 1e-10 * std::max(1.0, std::abs(ggam.data[k])));
  }
}

TEST(NlpdGradient, FiniteDifferences) {
  std::mt19937_64 g(24);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 6 + static_cast<int>(g() % 4), h = 6 + static_cast<int>(g() % 4);
    const Raster s = scene_raster(g, w, h), i = display_raster(g, w, h);
    const Raster grad = nlpd_gradient(s, i);
    ASSERT_TRUE(grad.same_shape(i));
    EXPECT_LT(test::relative_error(grad.data, nlpd_fd(s, i, 1e-6)), 1e-4);
  }
}

TEST(NlpdGradient, ZeroAtIdentity) {
  std::mt19937_64 g(25);
  const Raster s = display_raster(g, 9, 9);
  for (double v : nlpd_gradient(s, s).data) EXPECT_EQ(v, 0.0);
}

TEST(MedianSelector, MatchesSortOracle) {
  std::mt19937_64 g(26);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 3 + 2 * static_cast<int>(g() % 4);
    std::vector<double> c(static_cast<std::size_t>(k));
    // every fourth tuple draws from a tiny alphabet to exercise ties
    for (double& v : c) v = trial % 4 == 0 ? static_cast<double>(g() % 3) : uniform(g, 0.0, 1.0);
    ASSERT_EQ(select_structure_index(c, StructureSelector::median_contrast), sort_oracle(c));
  }
}

TEST(MedianSelector, ExamplesAndEvenK) {
  const std::vector<double> c3{0.9, 0.1, 0.5};
  EXPECT_EQ(select_structure_index(c3, StructureSelector::median_contrast), 2);
  EXPECT_EQ(select_structure_index(c3, StructureSelector::max_contrast), 0);
  const std::vector<double> c4{0.4, 0.3, 0.2, 0.1};
  EXPECT_EQ(select_structure_index(c4, StructureSelector::median_contrast), 2);
  const std::vector<double> ties{0.5, 0.5, 0.5};
  EXPECT_EQ(select_structure_index(ties, StructureSelector::median_contrast), 1);
}

TEST(MefSsim, SingleExposureIsNearPerfect) {
  std::mt19937_64 g(27);
  const ExposureStack s = random_stack(g, 1, 16, 12);
  EXPECT_GE(mef_ssim_variant(s, s.images[0]), 0.99);
  const Raster grad = mef_ssim_gradient(s, s.images[0]);
  for (double v : grad.data) EXPECT_NEAR(v, 0.0, 1e-8);
}

TEST(MefSsim, BoundedAndTranspositionInvariant) {
  std::mt19937_64 g(28);
  for (int trial = 0; trial < 10; ++trial) {
    const ExposureStack s = random_stack(g, 3 + trial % 3, 14, 11);
    const Raster f = test::random_raster(g, 14, 11, 0.0, 1.0);
    const double v = mef_ssim_variant(s, f);
    EXPECT_GT(v, -1.0);
    EXPECT_LE(v, 1.0);
    ExposureStack t = s;
    for (Raster& im : t.images) im = transpose(im);
    EXPECT_NEAR(mef_ssim_variant(t, transpose(f)), v, 1e-12);
  }
}

TEST(MefSsim, MedianDiffersFromMaxSelector) {
  std::mt19937_64 g(29);
  const ExposureStack s = random_stack(g, 5, 16, 16);
  const Raster f = test::random_raster(g, 16, 16, 0.2, 0.8);
  MefSsimConfig max_cfg;
  max_cfg.selector = StructureSelector::max_contrast;
  EXPECT_NE(mef_ssim_variant(s, f), mef_ssim_variant(s, f, max_cfg));
}

TEST(MefSsim, RejectsBadShapes) {
  std::mt19937_64 g(30);
  const ExposureStack s = random_stack(g, 3, 10, 10);
  EXPECT_THROW(mef_ssim_variant(s, Raster(10, 9)), ShapeError);
  const ExposureStack tiny = random_stack(g, 3, 6, 6);
  EXPECT_THROW(mef_ssim_variant(tiny, Raster(6, 6)), ShapeError);
  EXPECT_THROW(mef_ssim_variant(ExposureStack{}, Raster(10, 10)), ShapeError);
}

TEST(MefSsimGradient, FiniteDifferences) {
  std::mt19937_64 g(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 4;
    const ExposureStack s = random_stack(g, k, 10, 10);
    const Raster f = test::random_raster(g, 10, 10, 0.05, 0.95);
    const Raster grad = mef_ssim_gradient(s, f);
    ASSERT_TRUE(grad.same_shape(f));
    const auto fd = test::numeric_gradient(
        [&](const std::vector<double>& v) {
          Raster t = f;
          t.data = v;
          return mef_ssim_variant(s, t);
        },
        f.data, 1e-5);
    EXPECT_LT(test::relative_error(grad.data, fd), 1e-4);
  }
}

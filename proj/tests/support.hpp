#pragma once

// Test-side helpers and oracles. Nothing in here calls into the library's
// pyramid or metric code, so the oracles stay independent of what they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nltmo/raster.hpp"
#include "nltmo/rng.hpp"

namespace nltmo::test {

inline Raster random_raster(std::mt19937_64& g, int w, int h, double lo, double hi) {
  Raster r(w, h);
  for (double& v : r.data) v = uniform(g, lo, hi);
  return r;
}

// max_j |a_j - b_j| / max_j |b_j|: gradient error relative to the reference
// gradient's scale.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    num = std::max(num, std::abs(a[j] - b[j]));
    den = std::max(den, std::abs(b[j]));
  }
  return den > 0.0 ? num / den : num;
}

// Central differences of f at x, step h * max(|x_j|, 1).
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double x0 = x[j];
    const double step = h * std::max(std::abs(x0), 1.0);
    x[j] = x0 + step;
    const double fp = f(x);
    x[j] = x0 - step;
    const double fm = f(x);
    x[j] = x0;
    g[j] = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nltmo_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Straight-line NLPD. Plain 2-D arrays, the 5x5 kernel applied as one
// non-separable stencil, explicit reflection arithmetic.
// ---------------------------------------------------------------------------
namespace oracle {

using Grid = std::vector<std::vector<double>>;  // [y][x]

inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

inline Grid blur(const Grid& x, double gain) {
  static const double t[5] = {0.05, 0.25, 0.4, 0.25, 0.05};
  const int h = static_cast<int>(x.size()), w = static_cast<int>(x[0].size());
  Grid out(h, std::vector<double>(w, 0.0));
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      double acc = 0.0;
      for (int a = -2; a <= 2; ++a)
        for (int b = -2; b <= 2; ++b)
          acc += gain * t[a + 2] * gain * t[b + 2] * x[reflect(y + a, h)][reflect(xx + b, w)];
      out[y][xx] = acc;
    }
  return out;
}

inline double nlpd(const Grid& s, const Grid& i, int levels = 5, double gamma = 1.0 / 2.6, double alpha = 2.0,
                   double beta = 0.6) {
  auto pyramid = [&](const Grid& in) {
    Grid cur = in;
    for (auto& row : cur)
      for (double& v : row) v = std::pow(v, gamma);
    std::vector<Grid> out;
    for (int m = 0; m + 1 < levels; ++m) {
      const int h = static_cast<int>(cur.size()), w = static_cast<int>(cur[0].size());
      const Grid low = blur(cur, 1.0);
      const int h2 = (h + 1) / 2, w2 = (w + 1) / 2;
      Grid next(h2, std::vector<double>(w2));
      for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) next[y][x] = low[2 * y][2 * x];
      Grid stuffed(h, std::vector<double>(w, 0.0));
      for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) stuffed[2 * y][2 * x] = next[y][x];
      const Grid up = blur(stuffed, 2.0);
      Grid band = cur;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) band[y][x] -= up[y][x];
      out.push_back(band);
      cur = next;
    }
    out.push_back(cur);
    for (int m = 0; m < levels; ++m) {
      Grid& z = out[m];
      Grid mag = z;
      for (auto& row : mag)
        for (double& v : row) v = std::abs(v);
      const bool low = m == levels - 1;
      const Grid den = low ? mag : blur(mag, 1.0);
      for (std::size_t y = 0; y < z.size(); ++y)
        for (std::size_t x = 0; x < z[0].size(); ++x) z[y][x] /= den[y][x] + (low ? 4.86 : 0.17);
    }
    return out;
  };
  const auto ys = pyramid(s), yi = pyramid(i);
  double outer = 0.0;
  for (int m = 0; m < levels; ++m) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < ys[m].size(); ++y)
      for (std::size_t x = 0; x < ys[m][0].size(); ++x, ++n) sum += std::pow(std::abs(ys[m][y][x] - yi[m][y][x]), alpha);
    const double mean = sum / static_cast<double>(n);
    outer += mean > 0.0 ? std::pow(mean, beta / alpha) : 0.0;
  }
  outer /= levels;
  return outer > 0.0 ? std::pow(outer, 1.0 / beta) : 0.0;
}

inline Grid to_grid(const Raster& r) {
  Grid g(r.height, std::vector<double>(r.width));
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) g[y][x] = r.at(x, y);
  return g;
}

}  // namespace oracle
}  // namespace nltmo::test

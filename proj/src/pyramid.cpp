#include "nltmo/pyramid.hpp"

#include <cmath>
#include <string>

namespace nltmo {

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

// Horizontal pass (axis 0) or vertical pass (axis 1).
Raster filter_axis(const Raster& x, std::span<const double> taps, int axis) {
  const int r = static_cast<int>(taps.size()) / 2;
  Raster out(x.width, x.height);
  if (axis == 0) {
    std::vector<int> idx(static_cast<std::size_t>(x.width + 2 * r));
    for (int i = -r; i < x.width + r; ++i) idx[static_cast<std::size_t>(i + r)] = mirror_index(i, x.width);
    for (int y = 0; y < x.height; ++y) {
      auto src = x.row(y);
      auto dst = out.row(y);
      for (int i = 0; i < x.width; ++i) {
        double s = 0.0;
        for (int t = 0; t < static_cast<int>(taps.size()); ++t) s += taps[static_cast<std::size_t>(t)] * src[static_cast<std::size_t>(idx[static_cast<std::size_t>(i + t)])];
        dst[static_cast<std::size_t>(i)] = s;
      }
    }
  } else {
    for (int y = 0; y < x.height; ++y) {
      auto dst = out.row(y);
      for (int t = 0; t < static_cast<int>(taps.size()); ++t) {
        auto src = x.row(mirror_index(y + t - r, x.height));
        const double k = taps[static_cast<std::size_t>(t)];
        for (int i = 0; i < x.width; ++i) dst[static_cast<std::size_t>(i)] += k * src[static_cast<std::size_t>(i)];
      }
    }
  }
  return out;
}

Raster filter_axis_adjoint(const Raster& g, std::span<const double> taps, int axis) {
  const int r = static_cast<int>(taps.size()) / 2;
  Raster out(g.width, g.height);
  if (axis == 0) {
    std::vector<int> idx(static_cast<std::size_t>(g.width + 2 * r));
    for (int i = -r; i < g.width + r; ++i) idx[static_cast<std::size_t>(i + r)] = mirror_index(i, g.width);
    for (int y = 0; y < g.height; ++y) {
      auto src = g.row(y);
      auto dst = out.row(y);
      for (int i = 0; i < g.width; ++i) {
        const double v = src[static_cast<std::size_t>(i)];
        for (int t = 0; t < static_cast<int>(taps.size()); ++t)
          dst[static_cast<std::size_t>(idx[static_cast<std::size_t>(i + t)])] += taps[static_cast<std::size_t>(t)] * v;
      }
    }
  } else {
    for (int y = 0; y < g.height; ++y) {
      auto src = g.row(y);
      for (int t = 0; t < static_cast<int>(taps.size()); ++t) {
        auto dst = out.row(mirror_index(y + t - r, g.height));
        const double k = taps[static_cast<std::size_t>(t)];
        for (int i = 0; i < g.width; ++i) dst[static_cast<std::size_t>(i)] += k * src[static_cast<std::size_t>(i)];
      }
    }
  }
  return out;
}

constexpr std::array<double, 5> kDoubledTaps{0.1, 0.5, 0.8, 0.5, 0.1};

int half_ceil(int n) { return (n + 1) / 2; }

}  // namespace

Raster filter_separable(const Raster& x, std::span<const double> taps) {
  return filter_axis(filter_axis(x, taps, 0), taps, 1);
}

Raster filter_separable_adjoint(const Raster& g, std::span<const double> taps) {
  return filter_axis_adjoint(filter_axis_adjoint(g, taps, 1), taps, 0);
}

Raster downsample(const Raster& x) {
  if (x.empty()) throw ShapeError("downsample: empty raster");
  const Raster f = filter_separable(x, kPyramidTaps);
  Raster out(half_ceil(x.width), half_ceil(x.height));
  for (int y = 0; y < out.height; ++y)
    for (int i = 0; i < out.width; ++i) out.at(i, y) = f.at(2 * i, 2 * y);
  return out;
}

Raster downsample_adjoint(const Raster& g, int fine_w, int fine_h) {
  if (half_ceil(fine_w) != g.width || half_ceil(fine_h) != g.height) throw ShapeError("downsample_adjoint: size mismatch");
  Raster z(fine_w, fine_h);
  for (int y = 0; y < g.height; ++y)
    for (int i = 0; i < g.width; ++i) z.at(2 * i, 2 * y) = g.at(i, y);
  return filter_separable_adjoint(z, kPyramidTaps);
}

Raster upsample(const Raster& x, int target_w, int target_h) {
  if (half_ceil(target_w) != x.width || half_ceil(target_h) != x.height)
    throw ShapeError("upsample: target " + std::to_string(target_w) + "x" + std::to_string(target_h) +
                     " is not a 2x refinement of " + std::to_string(x.width) + "x" + std::to_string(x.height));
  Raster z(target_w, target_h);
  for (int y = 0; y < x.height; ++y)
    for (int i = 0; i < x.width; ++i) z.at(2 * i, 2 * y) = x.at(i, y);
  return filter_separable(z, kDoubledTaps);
}

Raster upsample_adjoint(const Raster& g, int coarse_w, int coarse_h) {
  if (half_ceil(g.width) != coarse_w || half_ceil(g.height) != coarse_h) throw ShapeError("upsample_adjoint: size mismatch");
  const Raster f = filter_separable_adjoint(g, kDoubledTaps);
  Raster out(coarse_w, coarse_h);
  for (int y = 0; y < coarse_h; ++y)
    for (int i = 0; i < coarse_w; ++i) out.at(i, y) = f.at(2 * i, 2 * y);
  return out;
}

LaplacianPyramid build_laplacian(const Raster& x, int levels) {
  if (levels < 1) throw ShapeError("build_laplacian: level count must be >= 1");
  if (x.empty()) throw ShapeError("build_laplacian: empty raster");
  LaplacianPyramid p;
  p.levels.reserve(static_cast<std::size_t>(levels));
  Raster cur = x;
  for (int i = 0; i + 1 < levels; ++i) {
    Raster next = downsample(cur);
    Raster band = upsample(next, cur.width, cur.height);
    for (std::size_t k = 0; k < band.size(); ++k) band.data[k] = cur.data[k] - band.data[k];
    p.levels.push_back(std::move(band));
    cur = std::move(next);
  }
  p.levels.push_back(std::move(cur));
  return p;
}

Raster collapse(const LaplacianPyramid& p) {
  if (p.levels.empty()) throw ShapeError("collapse: empty pyramid");
  Raster cur = p.levels.back();
  for (int i = p.size() - 2; i >= 0; --i) {
    const Raster& band = p.levels[static_cast<std::size_t>(i)];
    Raster up = upsample(cur, band.width, band.height);
    for (std::size_t k = 0; k < up.size(); ++k) up.data[k] += band.data[k];
    cur = std::move(up);
  }
  return cur;
}

Raster build_laplacian_adjoint(const LaplacianPyramid& g) {
  if (g.levels.empty()) throw ShapeError("build_laplacian_adjoint: empty pyramid");
  // Walk coarse to fine: X(i+1) = D X(i); Z(i) = X(i) - U X(i+1).
  Raster gx = g.levels.back();
  for (int i = g.size() - 2; i >= 0; --i) {
    const Raster& gz = g.levels[static_cast<std::size_t>(i)];
    Raster up_t = upsample_adjoint(gz, gx.width, gx.height);
    for (std::size_t k = 0; k < gx.size(); ++k) gx.data[k] -= up_t.data[k];
    Raster fine = downsample_adjoint(gx, gz.width, gz.height);
    for (std::size_t k = 0; k < fine.size(); ++k) fine.data[k] += gz.data[k];
    gx = std::move(fine);
  }
  return gx;
}

LaplacianPyramid collapse_adjoint(const Raster& grad, const LaplacianPyramid& shapes) {
  if (shapes.levels.empty()) throw ShapeError("collapse_adjoint: empty pyramid");
  require_same_shape(grad, shapes.levels.front(), "collapse_adjoint");
  LaplacianPyramid out;
  out.levels.resize(shapes.levels.size());
  Raster g = grad;
  for (int i = 0; i + 1 < shapes.size(); ++i) {
    const Raster& next = shapes.levels[static_cast<std::size_t>(i + 1)];
    Raster coarse = upsample_adjoint(g, next.width, next.height);
    out.levels[static_cast<std::size_t>(i)] = std::move(g);
    g = std::move(coarse);
  }
  out.levels.back() = std::move(g);
  return out;
}

NormalizedPyramid normalize_pyramid(const LaplacianPyramid& p, const NormalizationConstants& c) {
  NormalizedPyramid out;
  out.levels.reserve(p.levels.size());
  for (int i = 0; i < p.size(); ++i) {
    const Raster& z = p.levels[static_cast<std::size_t>(i)];
    Raster y(z.width, z.height);
    if (i + 1 < p.size()) {
      Raster a(z.width, z.height);
      for (std::size_t k = 0; k < z.size(); ++k) a.data[k] = std::abs(z.data[k]);
      const Raster d = filter_separable(a, kPyramidTaps);
      for (std::size_t k = 0; k < z.size(); ++k) y.data[k] = z.data[k] / (d.data[k] + c.band_c0);
    } else {
      for (std::size_t k = 0; k < z.size(); ++k) y.data[k] = z.data[k] / (std::abs(z.data[k]) + c.low_c0);
    }
    out.levels.push_back(std::move(y));
  }
  return out;
}

LaplacianPyramid normalize_pyramid_adjoint(const LaplacianPyramid& p, const NormalizedPyramid& gy,
                                           const NormalizationConstants& c) {
  if (gy.size() != p.size()) throw ShapeError("normalize_pyramid_adjoint: level count mismatch");
  LaplacianPyramid out;
  out.levels.reserve(p.levels.size());
  for (int i = 0; i < p.size(); ++i) {
    const Raster& z = p.levels[static_cast<std::size_t>(i)];
    const Raster& g = gy.levels[static_cast<std::size_t>(i)];
    require_same_shape(z, g, "normalize_pyramid_adjoint");
    Raster gz(z.width, z.height);
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    if (i + 1 < p.size()) {
      Raster a(z.width, z.height);
      for (std::size_t k = 0; k < z.size(); ++k) a.data[k] = std::abs(z.data[k]);
      const Raster d = filter_separable(a, kPyramidTaps);
      // Y = Z / D with D = P|Z| + c0
      Raster gd(z.width, z.height);
      for (std::size_t k = 0; k < z.size(); ++k) {
        const double den = d.data[k] + c.band_c0;
        gz.data[k] = g.data[k] / den;
        gd.data[k] = -g.data[k] * z.data[k] / (den * den);
      }
      const Raster ga = filter_separable_adjoint(gd, kPyramidTaps);
      for (std::size_t k = 0; k < z.size(); ++k) gz.data[k] += ga.data[k] * sign(z.data[k]);
    } else {
      for (std::size_t k = 0; k < z.size(); ++k) {
        const double den = std::abs(z.data[k]) + c.low_c0;
        // d/dz [z / (|z| + c)] = c / (|z| + c)^2
        gz.data[k] = g.data[k] * c.low_c0 / (den * den);
      }
    }
    out.levels.push_back(std::move(gz));
  }
  return out;
}

}  // namespace nltmo

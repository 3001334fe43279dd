#include "nltmo/scenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "nltmo/rng.hpp"

namespace nltmo {

namespace {

// Bilinearly interpolated lattice noise at cell size `cell`.
Raster value_noise(int w, int h, int cell, std::mt19937_64& rng) {
  const int gw = w / cell + 2, gh = h / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& g : grid) g = uniform(rng, -1.0, 1.0);
  Raster out(w, h);
  for (int y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = fx - x0;
      auto g = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
      out.at(x, y) = (1 - ty) * ((1 - tx) * g(x0, y0) + tx * g(x0 + 1, y0)) +
                     ty * ((1 - tx) * g(x0, y0 + 1) + tx * g(x0 + 1, y0 + 1));
    }
  }
  return out;
}

// Octave sum with amplitude proportional to cell size (roughly 1/f).
Raster fractal_noise(int w, int h, std::mt19937_64& rng) {
  Raster acc(w, h);
  double norm = 0.0;
  for (int cell = std::max(2, std::min(w, h) / 2); cell >= 2; cell /= 2) {
    const double amp = std::sqrt(static_cast<double>(cell));
    const Raster n = value_noise(w, h, cell, rng);
    for (std::size_t k = 0; k < acc.size(); ++k) acc.data[k] += amp * n.data[k];
    norm += amp;
  }
  for (double& v : acc.data) v /= norm;
  return acc;
}

struct Zone {
  double x0, y0, x1, y1;
  double level;  // log10 illumination
  double softness;
};

}  // namespace

HdrImage synthesize_scene(std::uint64_t seed, const SceneOptions& opt) {
  if (opt.width < 2 || opt.height < 2) throw ShapeError("synthesize_scene: image must be at least 2x2");
  const SeedTree tree(seed);
  auto layout = tree.stream("layout");
  auto texture = tree.stream("texture");
  auto noise = tree.stream("noise");
  const int w = opt.width, h = opt.height;

  // Reflectance: fractal texture plus a few flat-shaded objects with hard edges.
  Raster refl = fractal_noise(w, h, texture);
  for (double& v : refl.data) v = std::clamp(0.35 + 0.9 * v, 0.03, 0.95);
  const int objects = 3 + uniform_index(layout, 5);
  for (int o = 0; o < objects; ++o) {
    const double cx = uniform(layout, 0, w), cy = uniform(layout, 0, h);
    const double r = uniform(layout, 0.05, 0.2) * std::min(w, h);
    const double albedo = uniform(layout, 0.05, 0.9);
    const bool disc = uniform01(layout) < 0.5;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x - cx, dy = y - cy;
        const bool inside = disc ? dx * dx + dy * dy < r * r : std::abs(dx) < r && std::abs(dy) < 0.6 * r;
        if (inside) refl.at(x, y) = albedo * (0.9 + 0.2 * refl.at(x, y));
      }
  }

  // Illumination zones, e.g. a bright window over a dim interior.
  std::vector<Zone> zones;
  const int nz = 2 + uniform_index(layout, 3);
  for (int z = 0; z < nz; ++z) {
    const double x0 = uniform(layout, -0.2, 0.8) * w, y0 = uniform(layout, -0.2, 0.8) * h;
    zones.push_back({x0, y0, x0 + uniform(layout, 0.2, 0.6) * w, y0 + uniform(layout, 0.2, 0.6) * h,
                     uniform(layout, 0.3, 1.0) * opt.dynamic_range_decades, uniform(layout, 1.0, 6.0)});
  }
  const Raster shading = fractal_noise(w, h, layout);
  Raster illum(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double level = 0.25 * shading.at(x, y);
      for (const Zone& z : zones) {
        const double inside = 1.0 / (1.0 + std::exp(-(std::min({x - z.x0, z.x1 - x, y - z.y0, z.y1 - y})) / z.softness));
        level = std::max(level, z.level * inside);
      }
      illum.at(x, y) = std::pow(10.0, level);
    }

  // A compact light source roughly two decades above the brightest zone.
  double sx = 0, sy = 0, sr = 0;
  if (opt.light_source) {
    sx = uniform(layout, 0.1, 0.9) * w;
    sy = uniform(layout, 0.1, 0.5) * h;
    sr = uniform(layout, 0.02, 0.05) * std::min(w, h) + 1.0;
  }
  const double source_level = std::pow(10.0, opt.dynamic_range_decades + 2.0);

  std::array<double, 3> tint_warm{1.0, 0.85, 0.65}, tint_cool{0.75, 0.9, 1.1};
  const double tint_split = uniform(layout, 0.3, 0.7) * w;
  const Raster hue = fractal_noise(w, h, texture);

  HdrImage img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double radiance = refl.at(x, y) * illum.at(x, y);
      if (sr > 0) {
        const double d2 = ((x - sx) * (x - sx) + (y - sy) * (y - sy)) / (sr * sr);
        radiance += source_level * std::exp(-d2 * d2);
      }
      const double t = 1.0 / (1.0 + std::exp(-(x - tint_split) / 10.0));
      const double jitter = 0.3 * hue.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double tint = (1 - t) * tint_warm[c] + t * tint_cool[c];
        const double sat = std::clamp(1.0 + (c == 0 ? jitter : c == 2 ? -jitter : 0.0), 0.4, 1.6);
        const double n = 1.0 + opt.sensor_noise * uniform(noise, -1.7320508, 1.7320508);
        img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<float>(radiance * tint * sat * n);
      }
    }
  return img;
}

}  // namespace nltmo

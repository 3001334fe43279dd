#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nltmo/error.hpp"

namespace nltmo {

// Single-channel row-major image of doubles. All pyramid and metric math runs
// on this type.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  std::span<double> row(int y) { return {data.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)}; }
  std::span<const double> row(int y) const {
    return {data.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
  }

  bool same_shape(const Raster& o) const { return width == o.width && height == o.height; }
};

inline void require_same_shape(const Raster& a, const Raster& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": dimension mismatch");
}

Raster transpose(const Raster& r);
double raster_min(const Raster& r);
double raster_max(const Raster& r);
double raster_mean(const Raster& r);
double raster_stddev(const Raster& r);

}  // namespace nltmo

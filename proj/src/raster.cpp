#include "nltmo/raster.hpp"

#include <algorithm>
#include <cmath>

namespace nltmo {

Raster transpose(const Raster& r) {
  Raster t(r.height, r.width);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) t.at(y, x) = r.at(x, y);
  return t;
}

double raster_min(const Raster& r) { return *std::min_element(r.data.begin(), r.data.end()); }
double raster_max(const Raster& r) { return *std::max_element(r.data.begin(), r.data.end()); }

double raster_mean(const Raster& r) {
  double s = 0.0;
  for (double v : r.data) s += v;
  return s / static_cast<double>(r.size());
}

double raster_stddev(const Raster& r) {
  const double m = raster_mean(r);
  double s = 0.0;
  for (double v : r.data) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(r.size()));
}

}  // namespace nltmo

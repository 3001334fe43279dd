#pragma once

#include <cstdint>

#include "nltmo/hdr_io.hpp"

namespace nltmo {

// Procedural HDR scenes for training and tests: textured reflectance under a
// few illumination zones spanning several decades, optionally with a small
// very bright light source. Pixel values are relative radiance.
struct SceneOptions {
  int width = 192;
  int height = 128;
  double dynamic_range_decades = 4.0;  // ratio between brightest and darkest zone
  bool light_source = true;
  double sensor_noise = 0.01;  // multiplicative, per pixel
};

HdrImage synthesize_scene(std::uint64_t seed, const SceneOptions& opt = {});

}  // namespace nltmo

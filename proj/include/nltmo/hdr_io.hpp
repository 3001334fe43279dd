#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nltmo/raster.hpp"

namespace nltmo {

// Linear-radiance RGB image, interleaved. Values are in arbitrary units until
// the luminance channel has been calibrated.
struct HdrImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // 3 * width * height
  bool units_calibrated = false;

  HdrImage() = default;
  HdrImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  float* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* pixel(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
};

// Display-referred image with every value in [0,1]; one or three channels.
struct LdrImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> values;

  LdrImage() = default;
  LdrImage(int w, int h, int c) : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, 0.0f) {}
};

enum class LuminanceUnits {
  relative,    // proportional to radiance, unknown scale
  cd_per_m2,   // calibrated physical luminance
  normalized,  // display luminance mapped to [0,1]
};

// Luminance raster tagged with its unit convention.
struct LuminanceMap : Raster {
  LuminanceUnits units = LuminanceUnits::relative;

  LuminanceMap() = default;
  LuminanceMap(int w, int h, LuminanceUnits u = LuminanceUnits::relative) : Raster(w, h), units(u) {}
  LuminanceMap(Raster r, LuminanceUnits u) : Raster(std::move(r)), units(u) {}
};

inline constexpr double kRec709R = 0.2126;
inline constexpr double kRec709G = 0.7152;
inline constexpr double kRec709B = 0.0722;

inline constexpr double kDisplayMin = 5.0;    // cd/m^2
inline constexpr double kDisplayMax = 300.0;  // cd/m^2
inline constexpr double kDefaultRho = 0.6;

using Bytes = std::vector<std::uint8_t>;

// ---- Radiance RGBE -------------------------------------------------------
HdrImage load_radiance_hdr(std::span<const std::uint8_t> bytes);
// Run-length encodes scanlines whose width is in [8, 32767]; flat otherwise.
Bytes save_radiance_hdr(const HdrImage& img);

// ---- Portable float map --------------------------------------------------
HdrImage load_pfm(std::span<const std::uint8_t> bytes);
// Writes "PF" (color) little-endian with scale -1.
Bytes save_pfm(const HdrImage& img);
// Writes a single-channel "Pf" map.
Bytes save_pfm(const Raster& gray);

// ---- PNG -----------------------------------------------------------------
// 8-bit gray or RGB. Values are quantized as round(v * 255), after v^(1/2.2)
// when gamma_encode is set.
Bytes save_png(const LdrImage& img, bool gamma_encode);
// Decodes any PNG to [0,1] floats, gray or RGB (alpha dropped).
LdrImage load_png(std::span<const std::uint8_t> bytes);

// ---- Files ---------------------------------------------------------------
Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
// Dispatches on the extension: .hdr / .pic / .rgbe or .pfm.
HdrImage load_hdr_file(const std::filesystem::path& path);

// ---- Luminance and color -------------------------------------------------
// Rec. 709 luminance; result carries units_calibrated of the input.
LuminanceMap extract_luminance(const HdrImage& img);

// Affine photometric calibration: min(lum) -> s_min, max(lum) -> s_max.
// Throws DegenerateInputError for a constant map.
LuminanceMap calibrate(const Raster& lum, double s_min, double s_max);

// F_c = (S_c / S)^rho * F for each channel, clamped to [0,1]. f_lum is the
// normalized ([0,1]) tone-mapped luminance. Pixels with S == 0 use ratio 1.
LdrImage color_reproduce(const HdrImage& hdr, const Raster& s_lum, const Raster& f_lum, double rho);

// Applies v^(1/2.2) to every value.
LdrImage gamma_encode(LdrImage img);

// Bilinear resampling (pixel-center aligned).
HdrImage resize_bilinear(const HdrImage& img, int new_width, int new_height);
Raster resize_bilinear(const Raster& img, int new_width, int new_height);
// Target dimensions that make the short side equal to `short_side`,
// preserving aspect ratio.
std::pair<int, int> short_side_dims(int width, int height, int short_side);

}  // namespace nltmo

#pragma once

#include <span>
#include <vector>

#include "nltmo/pyramid.hpp"
#include "nltmo/raster.hpp"

namespace nltmo {

// ---------------------------------------------------------------------------
// Normalized Laplacian pyramid distance
// ---------------------------------------------------------------------------

struct NlpdConfig {
  double gamma = 1.0 / 2.6;  // photoreceptor power law
  double alpha = 2.0;        // within-subband exponent
  double beta = 0.6;         // across-subband exponent
  int levels = kDefaultPyramidLevels;
  NormalizationConstants norm{};
};

// NLPD between a calibrated HDR luminance map `s` and a display luminance map
// `i`, both in cd/m^2 and strictly positive.
double nlpd(const Raster& s, const Raster& i, const NlpdConfig& cfg = {});

// d nlpd(s, i) / d i. Returns the zero raster where the distance is zero.
Raster nlpd_gradient(const Raster& s, const Raster& i, const NlpdConfig& cfg = {});

// Caches the normalized pyramid of the reference so that repeated
// evaluations against one scene (training, iterative optimization) only pay
// for the test side. The *_gamma entry points take the test image already
// raised to the power gamma.
class NlpdReference {
 public:
  NlpdReference(const Raster& s, NlpdConfig cfg = {});

  const NlpdConfig& config() const { return cfg_; }
  int width() const { return width_; }
  int height() const { return height_; }

  double value(const Raster& i) const;
  double value_and_gradient(const Raster& i, Raster& grad) const;

  double value_gamma(const Raster& xi) const;
  double value_and_gradient_gamma(const Raster& xi, Raster& grad) const;

 private:
  double evaluate(const Raster& xi, Raster* grad) const;

  NlpdConfig cfg_;
  int width_ = 0;
  int height_ = 0;
  NormalizedPyramid ref_;
};

// ---------------------------------------------------------------------------
// MEF-SSIM with median-contrast structure selection
// ---------------------------------------------------------------------------

enum class StructureSelector {
  median_contrast,  // lower middle contrast for even K
  max_contrast,     // the original selector; comparison only
};

struct MefSsimConfig {
  int window = 8;
  double sigma_g = 0.2;
  double sigma_l = 0.5;
  double tau = 0.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  StructureSelector selector = StructureSelector::median_contrast;
};

// K luminance images in [0,1] rendered from one scene.
struct ExposureStack {
  std::vector<Raster> images;
  std::vector<double> max_luminances;  // simulated S_max per image, cd/m^2

  int k() const { return static_cast<int>(images.size()); }
  int width() const { return images.empty() ? 0 : images.front().width; }
  int height() const { return images.empty() ? 0 : images.front().height; }
};

// Index of the structure vector the selector picks from per-exposure patch
// contrasts. Median ties resolve to the lower exposure index.
int select_structure_index(std::span<const double> contrasts, StructureSelector selector);

double mef_ssim_variant(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg = {});

// d score / d fused. The desired patch depends only on the stack and is held
// constant.
Raster mef_ssim_gradient(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg = {});

// Value and gradient in one pass.
double mef_ssim_value_and_gradient(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg,
                                   Raster* grad);

}  // namespace nltmo

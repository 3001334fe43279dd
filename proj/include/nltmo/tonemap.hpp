#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nltmo/hdr_io.hpp"
#include "nltmo/metrics.hpp"
#include "nltmo/nn/can.hpp"
#include "nltmo/pyramid.hpp"

namespace nltmo {

inline constexpr double kStackMinLuminance = 1e3;  // cd/m^2
inline constexpr double kStackMaxLuminance = 1e7;  // cd/m^2
inline constexpr int kDefaultStackSize = 5;
inline constexpr int kDefaultShortSide = 512;

// Stage one: a shared CAN for the highpass and bandpass levels and a second
// CAN for the lowpass residual, both fed the normalized pyramid of S^gamma.
// The collapsed prediction u is a display coordinate in the gamma domain:
// I^gamma = 5^gamma + (300^gamma - 5^gamma) * clamp(u, 0, 1).
struct ToneMapModel {
  nn::CanConfig band_config = nn::CanConfig::tone_mapping();
  nn::CanConfig low_config = nn::CanConfig::tone_mapping();
  nn::CanParams<float> band;
  nn::CanParams<float> low;
  int levels = kDefaultPyramidLevels;
  double display_min = kDisplayMin;
  double display_max = kDisplayMax;

  static ToneMapModel initialize(std::uint64_t seed, int levels = kDefaultPyramidLevels);
  void validate() const;
};

// Stage two: per-exposure weight logits, shared over the stack.
struct FusionModel {
  nn::CanConfig config = nn::CanConfig::fusion();
  nn::CanParams<float> params;

  static FusionModel initialize(std::uint64_t seed);
  void validate() const;
};

// Per-pixel fusion weights; for every pixel the K values are >= 0 and sum to 1.
struct WeightMaps {
  std::vector<Raster> maps;

  int k() const { return static_cast<int>(maps.size()); }
};

// Calibrated luminance (cd/m^2) -> display luminance in [5, 300] cd/m^2.
LuminanceMap tone_map_single(const LuminanceMap& s, const ToneMapModel& model);

// K maximum luminances spaced uniformly in log10, endpoints included.
std::vector<double> stack_max_luminances(int k, double s_lo = kStackMinLuminance, double s_hi = kStackMaxLuminance);

// Calibrates `hdr_lum` at each simulated S_max (S_min = 5), tone maps, and
// maps each result to [0,1] via (I - 5) / 295.
ExposureStack generate_stack(const Raster& hdr_lum, const ToneMapModel& model, int k,
                             std::array<double, 2> s_range = {kStackMinLuminance, kStackMaxLuminance});

struct FusionResult {
  LuminanceMap fused;  // normalized [0,1]
  WeightMaps weights;
};

FusionResult fuse_stack(const ExposureStack& stack, const FusionModel& model);

struct PipelineOptions {
  int k = kDefaultStackSize;
  std::array<double, 2> s_range{kStackMinLuminance, kStackMaxLuminance};
  double rho = kDefaultRho;
  int short_side = kDefaultShortSide;  // 0 keeps the input size
};

struct PipelineTimings {
  double resize_s = 0.0;
  double stack_s = 0.0;
  double fusion_s = 0.0;
  double color_s = 0.0;
};

struct PipelineResult {
  LdrImage image;  // gamma-encoded RGB in [0,1]
  ExposureStack stack;
  FusionResult fusion;
  PipelineTimings timings;
};

PipelineResult run_pipeline(const HdrImage& hdr, const ToneMapModel& tmodel, const FusionModel& fmodel,
                            const PipelineOptions& opt = {});
// Convenience form returning only the image.
LdrImage full_pipeline(const HdrImage& hdr, const ToneMapModel& tmodel, const FusionModel& fmodel, int k = kDefaultStackSize,
                       double rho = kDefaultRho);

// ---------------------------------------------------------------------------
// Differentiable pieces used by training.
// ---------------------------------------------------------------------------

struct ToneMapTrace {
  LaplacianPyramid prediction;  // CAN outputs per level
  std::vector<nn::CanTape<float>> tapes;
  Raster collapsed;  // u before clamping
};

// Returns I^gamma (the display luminance raised to gamma) for a calibrated
// luminance map; records what the reverse pass needs when trace is non-null.
Raster tone_map_gamma(const Raster& s, const ToneMapModel& model, ToneMapTrace* trace = nullptr);

// Back-propagates dL/d(I^gamma) into the two CANs' parameter gradients.
// Outside [0,1] the clamp passes only gradients that point back into range.
void tone_map_gamma_backward(const ToneMapModel& model, const ToneMapTrace& trace, const Raster& grad_display_gamma,
                             nn::CanParams<float>& grad_band, nn::CanParams<float>& grad_low);

struct FusionTrace {
  nn::CanTape<float> tape;
  std::vector<Raster> weights;
};

FusionResult fuse_stack_traced(const ExposureStack& stack, const FusionModel& model, FusionTrace* trace);

// Back-propagates dL/dF into the fusion CAN's parameter gradient.
void fuse_stack_backward(const ExposureStack& stack, const FusionModel& model, const FusionTrace& trace,
                         const Raster& grad_fused, nn::CanParams<float>& grad);

// 5^gamma and 300^gamma for the default NLPD gamma.
std::array<double, 2> display_gamma_range(const ToneMapModel& model);

}  // namespace nltmo

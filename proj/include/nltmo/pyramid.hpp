#pragma once

#include <array>
#include <span>
#include <vector>

#include "nltmo/raster.hpp"

namespace nltmo {

// 5-tap binomial-like kernel shared by the pyramid lowpass L and the
// divisive-normalization filter P. Sums to one.
inline constexpr std::array<double, 5> kPyramidTaps{0.05, 0.25, 0.4, 0.25, 0.05};

inline constexpr int kDefaultPyramidLevels = 5;
inline constexpr int kMaxPyramidLevels = 6;

// Levels 0..M-2 are bandpass (0 is the finest / highpass), level M-1 is the
// lowpass residual. Level i has size ceil(w / 2^i) x ceil(h / 2^i).
struct LaplacianPyramid {
  std::vector<Raster> levels;

  int size() const { return static_cast<int>(levels.size()); }
  const Raster& lowpass() const { return levels.back(); }
};

// Divisively normalized coefficients, same shapes as the source pyramid.
struct NormalizedPyramid {
  std::vector<Raster> levels;

  int size() const { return static_cast<int>(levels.size()); }
};

struct NormalizationConstants {
  double band_c0 = 0.17;  // bandpass / highpass levels, P = 5-tap kernel
  double low_c0 = 4.86;   // lowpass level, P = identity
};

// Symmetric (mirror-without-repeat) boundary extension: -1 -> 1, n -> n-2.
int mirror_index(int i, int n);

// Separable 5-tap filtering with symmetric boundaries, and its exact adjoint.
Raster filter_separable(const Raster& x, std::span<const double> taps);
Raster filter_separable_adjoint(const Raster& g, std::span<const double> taps);

// L then keep even samples; output is ceil(w/2) x ceil(h/2).
Raster downsample(const Raster& x);
// Zero insertion to target size, then 2L per axis. Throws ShapeError unless
// ceil(target/2) matches the input size on both axes.
Raster upsample(const Raster& x, int target_w, int target_h);

// Adjoints (transposes) of the two linear resampling operators.
Raster downsample_adjoint(const Raster& g, int fine_w, int fine_h);
Raster upsample_adjoint(const Raster& g, int coarse_w, int coarse_h);

LaplacianPyramid build_laplacian(const Raster& x, int levels);
Raster collapse(const LaplacianPyramid& p);

// Gradient of a scalar w.r.t. the input of build_laplacian given its
// gradient w.r.t. every level.
Raster build_laplacian_adjoint(const LaplacianPyramid& grad_levels);
// Gradient w.r.t. every level of collapse() given its output gradient.
LaplacianPyramid collapse_adjoint(const Raster& grad, const LaplacianPyramid& shapes);

NormalizedPyramid normalize_pyramid(const LaplacianPyramid& p, const NormalizationConstants& c = {});
// Given dL/dY, returns dL/dZ for Y = normalize_pyramid(Z).
LaplacianPyramid normalize_pyramid_adjoint(const LaplacianPyramid& z, const NormalizedPyramid& grad_y,
                                           const NormalizationConstants& c = {});

}  // namespace nltmo

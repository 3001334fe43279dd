#pragma once

#include <vector>

#include "nltmo/hdr_io.hpp"
#include "nltmo/metrics.hpp"

namespace nltmo {

struct OptConfig {
  int max_iters = 500;
  // Initial step expressed as the largest per-pixel move in cd/m^2; the
  // gradient-space step is step_size / max|grad| at the first iterate.
  double step_size = 20.0;
  // Stop when the loss fell by less than tol (relative) per iteration on
  // average over the last `window` iterations.
  double tol = 1e-6;
  int window = 10;
  double growth = 1.25;   // step multiplier after an accepted step; 1 disables growth
  int max_backtracks = 40;
  double display_min = kDisplayMin;
  double display_max = kDisplayMax;
  NlpdConfig metric{};

  void validate() const;
};

struct OptTrace {
  std::vector<double> loss;  // loss[0] at the initialization, then one entry per iteration
  std::vector<double> step;  // step in effect at each entry
  int accepted = 0;
  int rejected = 0;
  bool converged = false;
};

struct OptResult {
  LuminanceMap image;  // display luminance in [display_min, display_max]
  OptTrace trace;
};

// Initial iterate: s itself when it already fits the display range,
// otherwise s mapped affinely onto it.
LuminanceMap nlpd_opt_initialize(const Raster& s, const OptConfig& cfg = {});

// Projected gradient descent on nlpd(s, I) over I in [display_min, display_max]
// with backtracking: a trial that does not decrease the loss is discarded and
// the step halved. The recorded loss is therefore non-increasing.
OptResult nlpd_opt(const LuminanceMap& s, const OptConfig& cfg = {});

}  // namespace nltmo

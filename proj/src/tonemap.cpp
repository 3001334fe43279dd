#include "nltmo/tonemap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace nltmo {

namespace {

const NlpdConfig kFrontEnd{};  // gamma and normalization constants shared with the loss

nn::Tensor<float> to_tensor(const Raster& r) {
  nn::Tensor<float> t(1, 1, r.height, r.width);
  for (std::size_t k = 0; k < r.size(); ++k) t.data[k] = static_cast<float>(r.data[k]);
  return t;
}

Raster to_raster(const nn::Tensor<float>& t, int b = 0) {
  Raster r(t.w, t.h);
  const float* p = t.data.data() + t.offset(b, 0, 0, 0);
  for (std::size_t k = 0; k < r.size(); ++k) r.data[k] = p[k];
  return r;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ToneMapModel ToneMapModel::initialize(std::uint64_t seed, int levels) {
  ToneMapModel m;
  m.levels = levels;
  const SeedTree tree(seed);
  auto band_rng = tree.stream("init.band");
  auto low_rng = tree.stream("init.low");
  m.band = nn::CanParams<float>::initialize(m.band_config, band_rng);
  m.low = nn::CanParams<float>::initialize(m.low_config, low_rng);
  m.validate();
  return m;
}

void ToneMapModel::validate() const {
  if (levels < 1 || levels > kMaxPyramidLevels) throw ShapeError("ToneMapModel: pyramid levels must be in [1, 6]");
  if (band_config.in_channels != 1 || band_config.out_channels() != 1 || low_config.in_channels != 1 ||
      low_config.out_channels() != 1)
    throw ShapeError("ToneMapModel: CANs must map 1 channel to 1 channel");
  nn::check_params(band_config, band);
  nn::check_params(low_config, low);
  if (!(display_max > display_min && display_min > 0.0)) throw ShapeError("ToneMapModel: invalid display range");
}

FusionModel FusionModel::initialize(std::uint64_t seed) {
  FusionModel m;
  auto rng = SeedTree(seed).stream("init.fusion");
  m.params = nn::CanParams<float>::initialize(m.config, rng);
  m.validate();
  return m;
}

void FusionModel::validate() const {
  if (config.in_channels != 1 || config.out_channels() != 1) throw ShapeError("FusionModel: CAN must map 1 channel to 1");
  nn::check_params(config, params);
}

std::array<double, 2> display_gamma_range(const ToneMapModel& model) {
  return {std::pow(model.display_min, kFrontEnd.gamma), std::pow(model.display_max, kFrontEnd.gamma)};
}

Raster tone_map_gamma(const Raster& s, const ToneMapModel& model, ToneMapTrace* trace) {
  Raster sg(s.width, s.height);
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(s.data[k] > 0.0)) throw DegenerateInputError("tone_map: luminance must be strictly positive");
    sg.data[k] = std::pow(s.data[k], kFrontEnd.gamma);
  }
  const NormalizedPyramid input = normalize_pyramid(build_laplacian(sg, model.levels), kFrontEnd.norm);

  LaplacianPyramid pred;
  pred.levels.reserve(static_cast<std::size_t>(input.size()));
  if (trace != nullptr) trace->tapes.assign(static_cast<std::size_t>(input.size()), {});
  for (int i = 0; i < input.size(); ++i) {
    const bool lowpass = i + 1 == input.size();
    const auto& cfg = lowpass ? model.low_config : model.band_config;
    const auto& params = lowpass ? model.low : model.band;
    nn::CanTape<float>* tape = trace != nullptr ? &trace->tapes[static_cast<std::size_t>(i)] : nullptr;
    pred.levels.push_back(to_raster(nn::can_forward(to_tensor(input.levels[static_cast<std::size_t>(i)]), cfg, params, tape)));
  }

  Raster u = collapse(pred);
  const auto [lo, hi] = display_gamma_range(model);
  Raster out(u.width, u.height);
  for (std::size_t k = 0; k < u.size(); ++k) out.data[k] = lo + (hi - lo) * std::clamp(u.data[k], 0.0, 1.0);
  if (trace != nullptr) {
    trace->prediction = std::move(pred);
    trace->collapsed = std::move(u);
  }
  return out;
}

void tone_map_gamma_backward(const ToneMapModel& model, const ToneMapTrace& trace, const Raster& grad_display_gamma,
                             nn::CanParams<float>& grad_band, nn::CanParams<float>& grad_low) {
  require_same_shape(trace.collapsed, grad_display_gamma, "tone_map_gamma_backward");
  const auto [lo, hi] = display_gamma_range(model);
  Raster gu(grad_display_gamma.width, grad_display_gamma.height);
  for (std::size_t k = 0; k < gu.size(); ++k) {
    const double u = trace.collapsed.data[k];
    const double g = (hi - lo) * grad_display_gamma.data[k];
    const bool pass = (u >= 0.0 && u <= 1.0) || (u < 0.0 && g < 0.0) || (u > 1.0 && g > 0.0);
    gu.data[k] = pass ? g : 0.0;
  }
  const LaplacianPyramid gp = collapse_adjoint(gu, trace.prediction);
  for (int i = 0; i < gp.size(); ++i) {
    const bool lowpass = i + 1 == gp.size();
    nn::can_backward(to_tensor(gp.levels[static_cast<std::size_t>(i)]), lowpass ? model.low_config : model.band_config,
                     lowpass ? model.low : model.band, trace.tapes[static_cast<std::size_t>(i)],
                     lowpass ? grad_low : grad_band, false);
  }
}

LuminanceMap tone_map_single(const LuminanceMap& s, const ToneMapModel& model) {
  if (s.units != LuminanceUnits::cd_per_m2) throw DegenerateInputError("tone_map_single: input is not calibrated");
  model.validate();
  Raster xg = tone_map_gamma(s, model);
  LuminanceMap out(s.width, s.height, LuminanceUnits::cd_per_m2);
  for (std::size_t k = 0; k < xg.size(); ++k)
    out.data[k] = std::clamp(std::pow(xg.data[k], 1.0 / kFrontEnd.gamma), model.display_min, model.display_max);
  return out;
}

std::vector<double> stack_max_luminances(int k, double s_lo, double s_hi) {
  if (k < 1) throw ShapeError("stack: k must be >= 1");
  if (!(s_lo > 0.0) || !(s_hi >= s_lo)) throw Error("stack: S_max range must be positive and increasing");
  std::vector<double> out(static_cast<std::size_t>(k));
  const double a = std::log10(s_lo), b = std::log10(s_hi);
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = k == 1 ? s_lo : std::pow(10.0, a + (b - a) * i / (k - 1));
  return out;
}

ExposureStack generate_stack(const Raster& hdr_lum, const ToneMapModel& model, int k, std::array<double, 2> s_range) {
  ExposureStack stack;
  stack.max_luminances = stack_max_luminances(k, s_range[0], s_range[1]);
  if (s_range[0] <= model.display_min) throw Error("stack: S_max range must lie above S_min = 5 cd/m^2");
  const double span = model.display_max - model.display_min;
  for (double smax : stack.max_luminances) {
    const LuminanceMap s = calibrate(hdr_lum, model.display_min, smax);
    LuminanceMap ldr = tone_map_single(s, model);
    for (double& v : ldr.data) v = (v - model.display_min) / span;
    stack.images.push_back(std::move(ldr));
  }
  return stack;
}

FusionResult fuse_stack_traced(const ExposureStack& stack, const FusionModel& model, FusionTrace* trace) {
  if (stack.k() < 1) throw ShapeError("fuse_stack: empty stack");
  const int k = stack.k(), w = stack.width(), h = stack.height();
  for (const Raster& im : stack.images) require_same_shape(im, stack.images.front(), "fuse_stack");

  nn::Tensor<float> batch(k, 1, h, w);
  for (int b = 0; b < k; ++b) {
    const Raster& im = stack.images[static_cast<std::size_t>(b)];
    float* dst = batch.data.data() + batch.offset(b, 0, 0, 0);
    for (std::size_t p = 0; p < im.size(); ++p) dst[p] = static_cast<float>(im.data[p]);
  }
  const nn::Tensor<float> logits = nn::can_forward(batch, model.config, model.params, trace ? &trace->tape : nullptr);

  FusionResult r;
  r.fused = LuminanceMap(w, h, LuminanceUnits::normalized);
  r.weights.maps.assign(static_cast<std::size_t>(k), Raster(w, h));
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<double> e(static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < plane; ++p) {
    double top = -INFINITY;
    for (int b = 0; b < k; ++b) top = std::max(top, static_cast<double>(logits.data[static_cast<std::size_t>(b) * plane + p]));
    double sum = 0.0;
    for (int b = 0; b < k; ++b) {
      e[static_cast<std::size_t>(b)] = std::exp(logits.data[static_cast<std::size_t>(b) * plane + p] - top);
      sum += e[static_cast<std::size_t>(b)];
    }
    double f = 0.0;
    for (int b = 0; b < k; ++b) {
      const double wgt = e[static_cast<std::size_t>(b)] / sum;
      r.weights.maps[static_cast<std::size_t>(b)].data[p] = wgt;
      f += wgt * stack.images[static_cast<std::size_t>(b)].data[p];
    }
    r.fused.data[p] = f;
  }
  if (trace != nullptr) trace->weights = r.weights.maps;
  return r;
}

FusionResult fuse_stack(const ExposureStack& stack, const FusionModel& model) {
  model.validate();
  return fuse_stack_traced(stack, model, nullptr);
}

void fuse_stack_backward(const ExposureStack& stack, const FusionModel& model, const FusionTrace& trace,
                         const Raster& grad_fused, nn::CanParams<float>& grad) {
  const int k = stack.k(), w = stack.width(), h = stack.height();
  require_same_shape(grad_fused, stack.images.front(), "fuse_stack_backward");
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  nn::Tensor<float> glogits(k, 1, h, w);
  for (std::size_t p = 0; p < plane; ++p) {
    // dL/dW_b = g * I_b; softmax: dL/dz_b = W_b (dL/dW_b - sum_j W_j dL/dW_j)
    double mix = 0.0;
    for (int b = 0; b < k; ++b)
      mix += trace.weights[static_cast<std::size_t>(b)].data[p] * grad_fused.data[p] * stack.images[static_cast<std::size_t>(b)].data[p];
    for (int b = 0; b < k; ++b) {
      const double wb = trace.weights[static_cast<std::size_t>(b)].data[p];
      glogits.data[static_cast<std::size_t>(b) * plane + p] =
          static_cast<float>(wb * (grad_fused.data[p] * stack.images[static_cast<std::size_t>(b)].data[p] - mix));
    }
  }
  nn::can_backward(glogits, model.config, model.params, trace.tape, grad, false);
}

PipelineResult run_pipeline(const HdrImage& hdr, const ToneMapModel& tmodel, const FusionModel& fmodel,
                            const PipelineOptions& opt) {
  tmodel.validate();
  fmodel.validate();
  PipelineResult r;
  auto t0 = std::chrono::steady_clock::now();
  HdrImage img = hdr;
  if (opt.short_side > 0) {
    const auto [w, h] = short_side_dims(hdr.width, hdr.height, opt.short_side);
    img = resize_bilinear(hdr, w, h);
  }
  const LuminanceMap lum = extract_luminance(img);
  r.timings.resize_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.stack = generate_stack(lum, tmodel, opt.k, opt.s_range);
  r.timings.stack_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.fusion = fuse_stack(r.stack, fmodel);
  r.timings.fusion_s = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.image = gamma_encode(color_reproduce(img, lum, r.fusion.fused, opt.rho));
  r.timings.color_s = seconds_since(t0);
  return r;
}

LdrImage full_pipeline(const HdrImage& hdr, const ToneMapModel& tmodel, const FusionModel& fmodel, int k, double rho) {
  PipelineOptions opt;
  opt.k = k;
  opt.rho = rho;
  return run_pipeline(hdr, tmodel, fmodel, opt).image;
}

}  // namespace nltmo

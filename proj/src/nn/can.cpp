#include "nltmo/nn/can.hpp"

#include <cmath>
#include <sstream>

namespace nltmo::nn {

CanConfig CanConfig::tone_mapping() {
  CanConfig cfg;
  cfg.in_channels = 1;
  const int dilations[] = {1, 2, 4, 8, 1, 1};
  for (int i = 0; i < 6; ++i) {
    const bool last = i == 5;
    cfg.layers.push_back({3, dilations[i], last ? 1 : 32, false, !last, !last});
  }
  return cfg;
}

CanConfig CanConfig::fusion() {
  CanConfig cfg;
  cfg.in_channels = 1;
  cfg.layers = {
      {3, 1, 24, false, true, true},
      {3, 2, 24, false, true, true},
      {3, 4, 24, false, true, true},
      {1, 1, 1, true, false, false},
  };
  return cfg;
}

void CanConfig::validate() const {
  if (in_channels < 1) throw ShapeError("CanConfig: in_channels must be >= 1");
  if (layers.empty()) throw ShapeError("CanConfig: no layers");
  for (const LayerSpec& l : layers) {
    if (l.kernel < 1 || l.kernel % 2 == 0) throw ShapeError("CanConfig: kernel must be odd");
    if (l.dilation < 1) throw ShapeError("CanConfig: dilation must be >= 1");
    if (l.width < 1) throw ShapeError("CanConfig: width must be >= 1");
  }
}

std::string CanConfig::describe() const {
  std::ostringstream os;
  os << "in=" << in_channels;
  for (const LayerSpec& l : layers) {
    os << " [k" << l.kernel << " d" << l.dilation << " w" << l.width << (l.has_bias ? " bias" : "")
       << (l.has_adaptive_norm ? " an" : "") << (l.has_lrelu ? " lrelu" : "") << "]";
  }
  return os.str();
}

template <typename T>
CanParams<T> CanParams<T>::initialize(const CanConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  CanParams<T> p;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    const int fan_in = cfg.layer_in_channels(i) * l.kernel * l.kernel;
    const double bound = std::sqrt(1.0 / fan_in);
    LayerParams<T> lp;
    lp.weight.resize(static_cast<std::size_t>(l.width) * fan_in);
    for (T& w : lp.weight) w = static_cast<T>(uniform(rng, -bound, bound));
    if (l.has_bias) lp.bias.assign(static_cast<std::size_t>(l.width), T(0));
    lp.lambda = {T(1), T(0)};
    p.layers.push_back(std::move(lp));
  }
  return p;
}

template <typename T>
CanParams<T> CanParams<T>::zeros(const CanConfig& cfg) {
  cfg.validate();
  CanParams<T> p;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    LayerParams<T> lp;
    lp.weight.assign(static_cast<std::size_t>(l.width) * cfg.layer_in_channels(i) * l.kernel * l.kernel, T(0));
    if (l.has_bias) lp.bias.assign(static_cast<std::size_t>(l.width), T(0));
    lp.lambda = {T(0), T(0)};
    p.layers.push_back(std::move(lp));
  }
  return p;
}

template <typename T>
std::vector<std::span<T>> CanParams<T>::blocks(const CanConfig& cfg) {
  std::vector<std::span<T>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(layers[i].weight);
    if (!layers[i].bias.empty()) out.emplace_back(layers[i].bias);
    if (cfg.layers[i].has_adaptive_norm) out.emplace_back(layers[i].lambda);
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> CanParams<T>::blocks(const CanConfig& cfg) const {
  std::vector<std::span<const T>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(layers[i].weight);
    if (!layers[i].bias.empty()) out.emplace_back(layers[i].bias);
    if (cfg.layers[i].has_adaptive_norm) out.emplace_back(layers[i].lambda);
  }
  return out;
}

template <typename T>
std::size_t CanParams<T>::parameter_count(const CanConfig& cfg) const {
  std::size_t n = 0;
  for (auto b : blocks(cfg)) n += b.size();
  return n;
}

template <typename T>
void CanParams<T>::fill(T v) {
  for (LayerParams<T>& l : layers) {
    std::fill(l.weight.begin(), l.weight.end(), v);
    std::fill(l.bias.begin(), l.bias.end(), v);
    l.lambda = {v, v};
  }
}

template <typename T>
void check_params(const CanConfig& cfg, const CanParams<T>& params) {
  cfg.validate();
  if (params.layers.size() != cfg.layers.size()) throw ShapeError("CAN: layer count mismatch between config and params");
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    const std::size_t expect = static_cast<std::size_t>(l.width) * cfg.layer_in_channels(i) * l.kernel * l.kernel;
    if (params.layers[i].weight.size() != expect)
      throw ShapeError("CAN: layer " + std::to_string(i + 1) + " weight size mismatch");
    if (params.layers[i].bias.size() != (l.has_bias ? static_cast<std::size_t>(l.width) : 0u))
      throw ShapeError("CAN: layer " + std::to_string(i + 1) + " bias presence/size mismatch");
  }
}

template <typename T>
Tensor<T> can_forward(const Tensor<T>& x, const CanConfig& cfg, const CanParams<T>& params, CanTape<T>* tape) {
  check_params(cfg, params);
  if (x.c != cfg.in_channels) throw ShapeError("can_forward: input has " + std::to_string(x.c) + " channels, expected " +
                                                std::to_string(cfg.in_channels));
  if (tape == nullptr) {
    // Inference: two buffers reused across layers, normalization in place.
    Tensor<T> a, b;
    const Tensor<T>* cur = &x;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
      const LayerSpec& l = cfg.layers[i];
      const LayerParams<T>& p = params.layers[i];
      Tensor<T>& z = cur == &a ? b : a;
      conv2d_dilated_into<T>(*cur, p.weight, l.width, l.kernel, l.dilation, p.bias, z);
      if (l.has_adaptive_norm) adaptive_norm_inplace<T>(z, p.lambda[0], p.lambda[1], l.has_lrelu);
      else if (l.has_lrelu) lrelu_inplace(z);
      cur = &z;
    }
    return std::move(cur == &a ? a : b);  // layers is non-empty, so cur is a or b
  }

  tape->layers.clear();
  tape->layers.resize(cfg.layers.size());
  Tensor<T> cur = x;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    const LayerParams<T>& p = params.layers[i];
    auto& tl = tape->layers[i];
    Tensor<T> z = conv2d_dilated<T>(cur, p.weight, l.width, l.kernel, l.dilation, p.bias);
    tl.input = std::move(cur);
    if (l.has_adaptive_norm) {
      Tensor<T> an = adaptive_norm<T>(z, p.lambda[0], p.lambda[1], &tl.normalized, &tl.stats);
      tl.conv = std::move(z);
      z = std::move(an);
    }
    if (l.has_lrelu) {
      tl.pre_act = z;
      lrelu_inplace(z);
    }
    cur = std::move(z);
  }
  return cur;
}

template <typename T>
Tensor<T> can_backward(const Tensor<T>& grad_out, const CanConfig& cfg, const CanParams<T>& params,
                       const CanTape<T>& tape, CanParams<T>& grad_params, bool need_input_grad) {
  if (tape.empty() || tape.layers.size() != cfg.layers.size())
    throw Error("can_backward: no recorded forward pass for this network");
  check_params(cfg, params);
  check_params(cfg, grad_params);
  Tensor<T> g = grad_out;
  for (std::size_t ii = cfg.layers.size(); ii-- > 0;) {
    const LayerSpec& l = cfg.layers[ii];
    const LayerParams<T>& p = params.layers[ii];
    LayerParams<T>& gp = grad_params.layers[ii];
    const auto& tl = tape.layers[ii];
    if (l.has_lrelu) g = lrelu_backward(tl.pre_act, std::move(g));
    if (l.has_adaptive_norm)
      g = adaptive_norm_backward<T>(tl.conv, tl.normalized, tl.stats, p.lambda[0], p.lambda[1], g, gp.lambda[0], gp.lambda[1]);
    const bool want_x = ii > 0 || need_input_grad;
    Tensor<T> gx;
    conv2d_dilated_backward<T>(tl.input, p.weight, l.width, l.kernel, l.dilation, g, want_x ? &gx : nullptr, gp.weight,
                               gp.bias);
    g = std::move(gx);
  }
  return g;
}

#define NLTMO_INSTANTIATE(T)                                                                                        \
  template struct CanParams<T>;                                                                                    \
  template void check_params<T>(const CanConfig&, const CanParams<T>&);                                            \
  template Tensor<T> can_forward<T>(const Tensor<T>&, const CanConfig&, const CanParams<T>&, CanTape<T>*);         \
  template Tensor<T> can_backward<T>(const Tensor<T>&, const CanConfig&, const CanParams<T>&, const CanTape<T>&,    \
                                     CanParams<T>&, bool);

NLTMO_INSTANTIATE(float)
NLTMO_INSTANTIATE(double)

#undef NLTMO_INSTANTIATE

}  // namespace nltmo::nn

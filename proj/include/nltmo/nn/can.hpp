#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nltmo/nn/ops.hpp"
#include "nltmo/nn/tensor.hpp"
#include "nltmo/rng.hpp"

namespace nltmo::nn {

struct LayerSpec {
  int kernel = 3;
  int dilation = 1;
  int width = 32;  // output channels
  bool has_bias = false;
  bool has_adaptive_norm = true;
  bool has_lrelu = true;

  bool operator==(const LayerSpec&) const = default;
};

// Context aggregation network: a stack of same-resolution dilated
// convolutions.
struct CanConfig {
  int in_channels = 1;
  std::vector<LayerSpec> layers;

  bool operator==(const CanConfig&) const = default;

  int out_channels() const { return layers.empty() ? in_channels : layers.back().width; }
  int layer_in_channels(std::size_t i) const { return i == 0 ? in_channels : layers[i - 1].width; }

  // Six 3x3 layers, dilations 1,2,4,8,1,1, width 32 (1 on the last), no
  // biases, adaptive normalization + LReLU on the first five.
  static CanConfig tone_mapping();
  // Four layers, 3x3 with dilations 1,2,4 and width 24, then a biased 1x1
  // head; adaptive normalization + LReLU on the first three.
  static CanConfig fusion();

  void validate() const;
  std::string describe() const;
};

template <typename T>
struct LayerParams {
  std::vector<T> weight;         // (out, in, k, k)
  std::vector<T> bias;           // empty unless the layer has a bias
  std::array<T, 2> lambda{1, 0};  // adaptive normalization mix

  bool operator==(const LayerParams&) const = default;
};

template <typename T>
struct CanParams {
  std::vector<LayerParams<T>> layers;

  bool operator==(const CanParams&) const = default;

  // Weights ~ U(-b, b), b = sqrt(1 / fan_in); biases 0; lambda = (1, 0).
  static CanParams initialize(const CanConfig& cfg, std::mt19937_64& rng);
  // Correctly shaped, every entry zero (gradient accumulator).
  static CanParams zeros(const CanConfig& cfg);

  // Every trainable block in layer order: weight, bias, lambdas. The lambdas
  // of layers without adaptive normalization are not trainable.
  std::vector<std::span<T>> blocks(const CanConfig& cfg);
  std::vector<std::span<const T>> blocks(const CanConfig& cfg) const;

  std::size_t parameter_count(const CanConfig& cfg) const;
  void fill(T v);

  template <typename U>
  CanParams<U> cast() const {
    CanParams<U> out;
    out.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.layers[i].weight.assign(layers[i].weight.begin(), layers[i].weight.end());
      out.layers[i].bias.assign(layers[i].bias.begin(), layers[i].bias.end());
      out.layers[i].lambda = {static_cast<U>(layers[i].lambda[0]), static_cast<U>(layers[i].lambda[1])};
    }
    return out;
  }
};

// Throws ShapeError when params do not conform to cfg.
template <typename T>
void check_params(const CanConfig& cfg, const CanParams<T>& params);

// Activations recorded by a forward pass for the reverse pass.
template <typename T>
struct CanTape {
  struct Layer {
    Tensor<T> input;       // layer input
    Tensor<T> conv;        // convolution output Z
    Tensor<T> normalized;  // BN(Z)
    Tensor<T> pre_act;     // AN(Z), input of the LReLU
    ChannelStats stats;
  };
  std::vector<Layer> layers;

  bool empty() const { return layers.empty(); }
};

// Runs every layer; records activations into `tape` when non-null.
template <typename T>
Tensor<T> can_forward(const Tensor<T>& x, const CanConfig& cfg, const CanParams<T>& params, CanTape<T>* tape = nullptr);

// Reverse pass. Adds parameter gradients into `grad_params` and returns the
// input gradient (empty tensor when need_input_grad is false). Throws if the
// tape holds no forward pass.
template <typename T>
Tensor<T> can_backward(const Tensor<T>& grad_out, const CanConfig& cfg, const CanParams<T>& params,
                       const CanTape<T>& tape, CanParams<T>& grad_params, bool need_input_grad = true);

}  // namespace nltmo::nn

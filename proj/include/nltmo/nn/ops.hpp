#pragma once

#include <span>
#include <vector>

#include "nltmo/nn/tensor.hpp"

namespace nltmo::nn {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEpsilon = 1e-5;

// Same-resolution dilated convolution (cross-correlation), zero padding of
// dilation * (k - 1) / 2 per side. `weight` is laid out (out, in, k, k);
// `bias` is empty or has `out_channels` entries.
template <typename T>
Tensor<T> conv2d_dilated(const Tensor<T>& x, std::span<const T> weight, int out_channels, int kernel, int dilation,
                         std::span<const T> bias);

// Same as conv2d_dilated, writing into `y` and reusing its storage.
template <typename T>
void conv2d_dilated_into(const Tensor<T>& x, std::span<const T> weight, int out_channels, int kernel, int dilation,
                         std::span<const T> bias, Tensor<T>& y);

// Reverse pass of conv2d_dilated. Accumulates into grad_weight / grad_bias
// (which must be sized like weight / bias). grad_x is skipped when null.
template <typename T>
void conv2d_dilated_backward(const Tensor<T>& x, std::span<const T> weight, int out_channels, int kernel, int dilation,
                             const Tensor<T>& grad_y, Tensor<T>* grad_x, std::span<T> grad_weight,
                             std::span<T> grad_bias);

// Per-channel statistics over batch and space, as used by the normalization.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
};

// AN(Z) = l1 * Z + l2 * BN(Z), where BN standardizes each channel with the
// statistics of the current input and has no learned shift or scale.
// `normalized` receives BN(Z) and `stats` the statistics when non-null.
template <typename T>
Tensor<T> adaptive_norm(const Tensor<T>& z, T lambda1, T lambda2, Tensor<T>* normalized = nullptr,
                        ChannelStats* stats = nullptr);

// Inference form: overwrites z with AN(z), followed by LReLU when requested.
template <typename T>
void adaptive_norm_inplace(Tensor<T>& z, T lambda1, T lambda2, bool leaky_relu);

// Given dL/d out, returns dL/dZ and adds dL/d lambda1, dL/d lambda2.
template <typename T>
Tensor<T> adaptive_norm_backward(const Tensor<T>& z, const Tensor<T>& normalized, const ChannelStats& stats, T lambda1,
                                 T lambda2, const Tensor<T>& grad_out, T& grad_lambda1, T& grad_lambda2);

// max(0.2 z, z)
template <typename T>
Tensor<T> lrelu(Tensor<T> z);
template <typename T>
void lrelu_inplace(Tensor<T>& z);
// grad * (z > 0 ? 1 : 0.2), evaluated on the pre-activation z.
template <typename T>
Tensor<T> lrelu_backward(const Tensor<T>& z, Tensor<T> grad);

}  // namespace nltmo::nn

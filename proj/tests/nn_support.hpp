#pragma once

// Random networks, tensors and parameter flattening for the CAN checks.

#include <cmath>
#include <vector>

#include "nltmo/nn/can.hpp"
#include "support.hpp"

namespace nltmo::test {

using nn::CanConfig;
using nn::CanParams;
using nn::LayerSpec;
using nn::Tensor;

template <typename T>
Tensor<T> random_tensor(std::mt19937_64& g, int n, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(n, c, h, w);
  for (T& v : t.data) v = static_cast<T>(uniform(g, lo, hi));
  return t;
}

template <typename T>
inline double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    den = std::max(den, std::abs(static_cast<double>(b.data[i])));
  }
  return den > 0 ? num / den : num;
}

template <typename T>
inline double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

inline CanConfig random_config(std::mt19937_64& g) {
  CanConfig cfg;
  cfg.in_channels = 1 + static_cast<int>(g() % 3);
  const int depth = 2 + static_cast<int>(g() % 2);
  for (int i = 0; i < depth; ++i) {
    LayerSpec l;
    const bool last = i + 1 == depth;
    l.kernel = last && g() % 3 == 0 ? 1 : 3;
    l.dilation = 1 << (g() % 3);
    l.width = last ? 1 : 2 + static_cast<int>(g() % 3);
    l.has_bias = g() % 2 == 0;
    l.has_adaptive_norm = !last;
    l.has_lrelu = !last;
    cfg.layers.push_back(l);
  }
  return cfg;
}

inline CanParams<double> random_params(std::mt19937_64& g, const CanConfig& cfg) {
  CanParams<double> p = CanParams<double>::initialize(cfg, g);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    for (double& b : p.layers[i].bias) b = uniform(g, -0.5, 0.5);
    if (cfg.layers[i].has_adaptive_norm) p.layers[i].lambda = {uniform(g, 0.5, 1.5), uniform(g, -1.0, 1.0)};
  }
  return p;
}

// Flattens every trainable block followed by the input.
inline std::vector<double> flatten(const CanConfig& cfg, const CanParams<double>& p, const Tensor<double>& x) {
  std::vector<double> v;
  for (auto b : p.blocks(cfg)) v.insert(v.end(), b.begin(), b.end());
  v.insert(v.end(), x.data.begin(), x.data.end());
  return v;
}

inline void unflatten(const CanConfig& cfg, const std::vector<double>& v, CanParams<double>& p, Tensor<double>& x) {
  std::size_t o = 0;
  for (auto b : p.blocks(cfg))
    for (double& e : b) e = v[o++];
  for (double& e : x.data) e = v[o++];
}

}  // namespace nltmo::test

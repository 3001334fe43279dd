#pragma once

#include <cstddef>
#include <vector>

#include "nltmo/error.hpp"

namespace nltmo::nn {

// Dense 4-D array with logical shape (batch, channels, height, width).
// Storage is channel-interleaved (NHWC) so that the convolution kernels can
// vectorize across channels.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int batch, int channels, int height, int width, T fill = T(0))
      : n(batch), c(channels), h(height), w(width),
        data(static_cast<std::size_t>(batch) * channels * height * width, fill) {}

  // Changes the shape, reusing the existing allocation when large enough.
  // Contents are unspecified afterwards.
  void reshape(int batch, int channels, int height, int width) {
    n = batch;
    c = channels;
    h = height;
    w = width;
    data.resize(static_cast<std::size_t>(batch) * channels * height * width);
  }

  std::size_t size() const { return data.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(n) * h * w; }
  bool empty() const { return data.empty(); }

  std::size_t offset(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch;
  }
  T& at(int b, int ch, int y, int x) { return data[offset(b, ch, y, x)]; }
  T at(int b, int ch, int y, int x) const { return data[offset(b, ch, y, x)]; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.n = n;
    out.c = c;
    out.h = h;
    out.w = w;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

}  // namespace nltmo::nn

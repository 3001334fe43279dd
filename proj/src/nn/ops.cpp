#include "nltmo/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <type_traits>

namespace nltmo::nn {

namespace {

// Explicit SIMD over output channels; GCC/Clang vector extensions.
template <typename T, int L>
using Vec [[gnu::vector_size(L * sizeof(T))]] = T;
// Same, without the alignment requirement, for loads and stores.
template <typename T, int L>
using VecU [[gnu::vector_size(L * sizeof(T)), gnu::aligned(alignof(T)), gnu::may_alias]] = T;

// Output channels are covered by NW full-width (64-byte) vectors plus at
// most one half-width vector; P pixels per block keeps the accumulators
// within the register file.
template <typename T>
inline constexpr int kWide = static_cast<int>(64 / sizeof(T));
template <typename T, int CO>
inline constexpr int kNumWide = CO / kWide<T>;
template <typename T, int CO>
inline constexpr int kHalf = CO % kWide<T>;  // 0 or kWide / 2
template <typename T, int CO>
inline constexpr int kBlock = std::min(12, 24 / (kNumWide<T, CO> + (kHalf<T, CO> > 0 ? 1 : 0)));

struct Geometry {
  int ci = 0;
  int co = 0;
  int kernel = 0;
  int dilation = 0;
  int pad = 0;
  int height = 0;
  int width = 0;
  int padded_width = 0;
  std::size_t row_stride = 0;   // elements per padded row
  std::vector<std::ptrdiff_t> tap_offset;  // per tap, relative to the window's top-left

  Geometry(int in_ch, int out_ch, int k, int d, int h, int w)
      : ci(in_ch), co(out_ch), kernel(k), dilation(d), pad(d * (k - 1) / 2), height(h), width(w) {
    padded_width = w + 2 * pad;
    row_stride = static_cast<std::size_t>(padded_width) * ci;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx)
        tap_offset.push_back(static_cast<std::ptrdiff_t>(ky * d) * static_cast<std::ptrdiff_t>(row_stride) +
                             static_cast<std::ptrdiff_t>(kx * d) * ci);
  }
  int taps() const { return kernel * kernel; }
};

template <typename T>
void pad_image(const Tensor<T>& x, int b, int pad, std::vector<T>& out) {
  const int pw = x.w + 2 * pad, ph = x.h + 2 * pad;
  out.assign(static_cast<std::size_t>(pw) * ph * x.c, T(0));
  for (int y = 0; y < x.h; ++y) {
    const T* src = x.data.data() + x.offset(b, 0, y, 0);
    T* dst = out.data() + ((static_cast<std::size_t>(y + pad) * pw) + pad) * x.c;
    std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(x.w) * x.c);
  }
}

// (out, in, k, k) -> [tap][in][out]
template <typename T>
std::vector<T> pack_weights(std::span<const T> w, int co, int ci, int k) {
  std::vector<T> p(w.size());
  for (int o = 0; o < co; ++o)
    for (int i = 0; i < ci; ++i)
      for (int t = 0; t < k * k; ++t)
        p[(static_cast<std::size_t>(t) * ci + i) * co + o] = w[(static_cast<std::size_t>(o) * ci + i) * k * k + t];
  return p;
}

// `offs` holds one input offset per (tap, input channel) pair, in the same
// order as the packed weight rows; a single flat loop lets the compiler keep
// the accumulators in registers.
template <typename T, int CO, int P>
inline void forward_block(const T* base, const std::ptrdiff_t* offs, int rows, int ci_n, const T* wk, T* out,
                          bool accumulate) {
  constexpr int L = kWide<T>;
  constexpr int NV = kNumWide<T, CO>;
  constexpr int H = kHalf<T, CO>;
  static_assert(H == 0 || H == L / 2, "unsupported output channel count");
  using V = Vec<T, L>;
  using VU = VecU<T, L>;
  using VH = Vec<T, H == 0 ? L / 2 : H>;
  using VHU = VecU<T, H == 0 ? L / 2 : H>;
  V acc[P][NV > 0 ? NV : 1];
  VH acc_h[P];
#pragma GCC unroll 16
  for (int p = 0; p < P; ++p) {
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) acc[p][v] = accumulate ? V(*reinterpret_cast<const VU*>(out + p * CO + v * L)) : V{};
    if constexpr (H > 0) acc_h[p] = accumulate ? VH(*reinterpret_cast<const VHU*>(out + p * CO + NV * L)) : VH{};
    else acc_h[p] = VH{};
  }
  for (int r = 0; r < rows; ++r) {
    const T* ip = base + offs[r];
    const T* wr = wk + static_cast<std::size_t>(r) * CO;
    V w[NV > 0 ? NV : 1];
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) w[v] = *reinterpret_cast<const VU*>(wr + v * L);
    VH wh{};
    if constexpr (H > 0) wh = *reinterpret_cast<const VHU*>(wr + NV * L);
#pragma GCC unroll 16
    for (int p = 0; p < P; ++p) {
      const T x = ip[static_cast<std::size_t>(p) * ci_n];
#pragma GCC unroll 8
      for (int v = 0; v < NV; ++v) acc[p][v] += x * w[v];
      if constexpr (H > 0) acc_h[p] += x * wh;
    }
  }
#pragma GCC unroll 16
  for (int p = 0; p < P; ++p) {
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) *reinterpret_cast<VU*>(out + p * CO + v * L) = acc[p][v];
    if constexpr (H > 0) *reinterpret_cast<VHU*>(out + p * CO + NV * L) = acc_h[p];
  }
}

// Pixels are processed in strips, one tap at a time, so that the tap's
// weights, the strip's inputs and its partial sums stay in L1.
template <typename T, int CO>
void forward_image(const T* xp, const Geometry& g, const T* wk, T* out) {
  constexpr int P = kBlock<T, CO>;
  constexpr int kStrip = 8 * P;
  const int ci = g.ci, taps = g.taps();
  std::vector<std::ptrdiff_t> offs(static_cast<std::size_t>(taps) * ci);
  for (int t = 0; t < taps; ++t)
    for (int c = 0; c < ci; ++c) offs[static_cast<std::size_t>(t * ci + c)] = g.tap_offset[static_cast<std::size_t>(t)] + c;
  for (int y = 0; y < g.height; ++y) {
    const T* row = xp + static_cast<std::size_t>(y) * g.row_stride;
    T* orow = out + static_cast<std::size_t>(y) * g.width * CO;
    for (int x0 = 0; x0 < g.width; x0 += kStrip) {
      const int x1 = std::min(g.width, x0 + kStrip);
      for (int t = 0; t < taps; ++t) {
        const std::ptrdiff_t* to = offs.data() + static_cast<std::size_t>(t) * ci;
        const T* tw = wk + static_cast<std::size_t>(t) * ci * CO;
        int x = x0;
        for (; x + P <= x1; x += P)
          forward_block<T, CO, P>(row + static_cast<std::size_t>(x) * ci, to, ci, ci, tw, orow + static_cast<std::size_t>(x) * CO, t > 0);
        for (; x < x1; ++x)
          forward_block<T, CO, 1>(row + static_cast<std::size_t>(x) * ci, to, ci, ci, tw, orow + static_cast<std::size_t>(x) * CO, t > 0);
      }
    }
  }
}

// One output channel: a dot product per pixel, vectorized over input channels.
template <typename T>
void forward_image_single(const T* xp, const Geometry& g, const T* wk, T* out) {
  constexpr int L = static_cast<int>(64 / sizeof(T));
  using V = Vec<T, L>;
  using VU = VecU<T, L>;
  const int ci = g.ci, chunks = ci / L, taps = g.taps();
  for (int y = 0; y < g.height; ++y) {
    const T* row = xp + static_cast<std::size_t>(y) * g.row_stride;
    for (int x = 0; x < g.width; ++x) {
      const T* base = row + static_cast<std::size_t>(x) * ci;
      V acc{};
      T s = T(0);
      for (int t = 0; t < taps; ++t) {
        const T* ip = base + g.tap_offset[static_cast<std::size_t>(t)];
        const T* wt = wk + static_cast<std::size_t>(t) * ci;
        for (int c = 0; c < chunks; ++c)
          acc += *reinterpret_cast<const VU*>(ip + c * L) * *reinterpret_cast<const VU*>(wt + c * L);
        for (int c = chunks * L; c < ci; ++c) s += ip[c] * wt[c];
      }
      for (int l = 0; l < L; ++l) s += acc[l];
      out[static_cast<std::size_t>(y) * g.width + x] = s;
    }
  }
}

template <typename T>
void forward_image_generic(const T* xp, const Geometry& g, const T* wk, T* out) {
  std::vector<T> acc(static_cast<std::size_t>(g.co));
  for (int y = 0; y < g.height; ++y) {
    const T* row = xp + static_cast<std::size_t>(y) * g.row_stride;
    for (int x = 0; x < g.width; ++x) {
      std::fill(acc.begin(), acc.end(), T(0));
      const T* base = row + static_cast<std::size_t>(x) * g.ci;
      for (int t = 0; t < g.taps(); ++t) {
        const T* ip = base + g.tap_offset[static_cast<std::size_t>(t)];
        const T* wt = wk + static_cast<std::size_t>(t) * g.ci * g.co;
        for (int ci = 0; ci < g.ci; ++ci) {
          const T v = ip[ci];
          const T* wc = wt + static_cast<std::size_t>(ci) * g.co;
          for (int o = 0; o < g.co; ++o) acc[static_cast<std::size_t>(o)] += v * wc[o];
        }
      }
      std::copy(acc.begin(), acc.end(), out + (static_cast<std::size_t>(y) * g.width + x) * g.co);
    }
  }
}

template <typename T>
void dispatch_forward(const T* xp, const Geometry& g, const T* wk, T* out) {
  switch (g.co) {
    case 1: forward_image_single(xp, g, wk, out); break;
    case 16: forward_image<T, 16>(xp, g, wk, out); break;
    case 24: forward_image<T, 24>(xp, g, wk, out); break;
    case 32: forward_image<T, 32>(xp, g, wk, out); break;
    default: forward_image_generic(xp, g, wk, out); break;
  }
}

// acc[tap][ci][co] += sum_p xpad[p + tap][ci] * gy[p][co]. A block of PB
// input channels times all output channels accumulates in registers while
// the pixels stream past.
template <typename T, int CO, int PB>
void weight_grad_block(const T* xp, const Geometry& g, const T* gy, int t, int ci0, int y, int x0, int x1,
                       T* acc_out) {
  constexpr int L = kWide<T>;
  constexpr int NV = kNumWide<T, CO>;
  constexpr int H = kHalf<T, CO>;
  using V = Vec<T, L>;
  using VU = VecU<T, L>;
  using VH = Vec<T, H == 0 ? L / 2 : H>;
  using VHU = VecU<T, H == 0 ? L / 2 : H>;
  V acc[PB][NV > 0 ? NV : 1];
  VH acc_h[PB];
#pragma GCC unroll 16
  for (int j = 0; j < PB; ++j) {
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) acc[j][v] = V{};
    acc_h[j] = VH{};
  }
  const std::ptrdiff_t off = g.tap_offset[static_cast<std::size_t>(t)] + ci0;
  const T* row = xp + static_cast<std::size_t>(y) * g.row_stride + off;
  const T* grow = gy + static_cast<std::size_t>(y) * g.width * CO;
  for (int x = x0; x < x1; ++x) {
    const T* ip = row + static_cast<std::size_t>(x) * g.ci;
    const T* gp = grow + static_cast<std::size_t>(x) * CO;
    V gv[NV > 0 ? NV : 1];
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) gv[v] = *reinterpret_cast<const VU*>(gp + v * L);
    VH gh{};
    if constexpr (H > 0) gh = *reinterpret_cast<const VHU*>(gp + NV * L);
#pragma GCC unroll 16
    for (int j = 0; j < PB; ++j) {
      const T xv = ip[j];
#pragma GCC unroll 8
      for (int v = 0; v < NV; ++v) acc[j][v] += xv * gv[v];
      if constexpr (H > 0) acc_h[j] += xv * gh;
    }
  }
#pragma GCC unroll 16
  for (int j = 0; j < PB; ++j) {
    T* dst = acc_out + (static_cast<std::size_t>(t) * g.ci + ci0 + j) * CO;
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) *reinterpret_cast<VU*>(dst + v * L) += acc[j][v];
    if constexpr (H > 0) *reinterpret_cast<VHU*>(dst + NV * L) += acc_h[j];
  }
}

// Strips of one image row keep the strip's inputs and output gradients in
// L1 while every (tap, channel block) pair consumes them.
template <typename T, int CO>
void weight_grad_image(const T* xp, const Geometry& g, const T* gy, T* acc) {
  constexpr int PB = kBlock<T, CO>;
  constexpr int kStrip = 64;
  for (int y = 0; y < g.height; ++y)
    for (int x0 = 0; x0 < g.width; x0 += kStrip) {
      const int x1 = std::min(g.width, x0 + kStrip);
      for (int t = 0; t < g.taps(); ++t) {
        int c = 0;
        for (; c + PB <= g.ci; c += PB) weight_grad_block<T, CO, PB>(xp, g, gy, t, c, y, x0, x1, acc);
        for (; c < g.ci; ++c) weight_grad_block<T, CO, 1>(xp, g, gy, t, c, y, x0, x1, acc);
      }
    }
}

// One output channel: vectorize over input channels instead.
template <typename T>
void weight_grad_single(const T* xp, const Geometry& g, const T* gy, T* acc) {
  std::vector<T> buf(static_cast<std::size_t>(g.ci));
  for (int t = 0; t < g.taps(); ++t) {
    std::fill(buf.begin(), buf.end(), T(0));
    T* __restrict a = buf.data();
    for (int y = 0; y < g.height; ++y) {
      const T* row = xp + static_cast<std::size_t>(y) * g.row_stride + g.tap_offset[static_cast<std::size_t>(t)];
      for (int x = 0; x < g.width; ++x) {
        const T gv = gy[static_cast<std::size_t>(y) * g.width + x];
        const T* __restrict ip = row + static_cast<std::size_t>(x) * g.ci;
        for (int c = 0; c < g.ci; ++c) a[c] += gv * ip[c];
      }
    }
    T* dst = acc + static_cast<std::size_t>(t) * g.ci;
    for (int c = 0; c < g.ci; ++c) dst[c] += a[c];
  }
}

template <typename T>
void weight_grad_generic(const T* xp, const Geometry& g, const T* gy, T* acc) {
  for (int y = 0; y < g.height; ++y) {
    const T* row = xp + static_cast<std::size_t>(y) * g.row_stride;
    for (int x = 0; x < g.width; ++x) {
      const T* gp = gy + (static_cast<std::size_t>(y) * g.width + x) * g.co;
      const T* base = row + static_cast<std::size_t>(x) * g.ci;
      for (int t = 0; t < g.taps(); ++t) {
        const T* ip = base + g.tap_offset[static_cast<std::size_t>(t)];
        T* a = acc + static_cast<std::size_t>(t) * g.ci * g.co;
        for (int ci = 0; ci < g.ci; ++ci)
          for (int o = 0; o < g.co; ++o) a[static_cast<std::size_t>(ci) * g.co + o] += ip[ci] * gp[o];
      }
    }
  }
}

template <typename T>
void dispatch_weight_grad(const T* xp, const Geometry& g, const T* gy, T* acc) {
  switch (g.co) {
    case 1: weight_grad_single(xp, g, gy, acc); break;
    case 16: weight_grad_image<T, 16>(xp, g, gy, acc); break;
    case 24: weight_grad_image<T, 24>(xp, g, gy, acc); break;
    case 32: weight_grad_image<T, 32>(xp, g, gy, acc); break;
    default: weight_grad_generic(xp, g, gy, acc); break;
  }
}

void check_conv_args(int in_c, std::size_t weight_size, int out_channels, int kernel, int dilation, std::size_t bias_size) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (dilation < 1) throw ShapeError("conv2d: dilation must be >= 1");
  if (out_channels < 1) throw ShapeError("conv2d: out_channels must be >= 1");
  if (weight_size != static_cast<std::size_t>(out_channels) * in_c * kernel * kernel)
    throw ShapeError("conv2d: weight shape does not match " + std::to_string(out_channels) + "x" + std::to_string(in_c) +
                     "x" + std::to_string(kernel) + "x" + std::to_string(kernel));
  if (bias_size != 0 && bias_size != static_cast<std::size_t>(out_channels)) throw ShapeError("conv2d: bias size mismatch");
}

}  // namespace

template <typename T>
void conv2d_dilated_into(const Tensor<T>& x, std::span<const T> weight, int out_channels, int kernel, int dilation,
                         std::span<const T> bias, Tensor<T>& y) {
  check_conv_args(x.c, weight.size(), out_channels, kernel, dilation, bias.size());
  if (&x == &y) throw ShapeError("conv2d: output must not alias the input");
  const Geometry g(x.c, out_channels, kernel, dilation, x.h, x.w);
  const std::vector<T> wk = pack_weights(weight, out_channels, x.c, kernel);
  y.reshape(x.n, out_channels, x.h, x.w);
  thread_local std::vector<T> xp;
  for (int b = 0; b < x.n; ++b) {
    pad_image(x, b, g.pad, xp);
    T* out = y.data.data() + y.offset(b, 0, 0, 0);
    dispatch_forward(xp.data(), g, wk.data(), out);
    if (!bias.empty()) {
      for (std::size_t p = 0; p < static_cast<std::size_t>(x.h) * x.w; ++p)
        for (int o = 0; o < out_channels; ++o) out[p * out_channels + o] += bias[static_cast<std::size_t>(o)];
    }
  }
}

template <typename T>
Tensor<T> conv2d_dilated(const Tensor<T>& x, std::span<const T> weight, int out_channels, int kernel, int dilation,
                         std::span<const T> bias) {
  Tensor<T> y;
  conv2d_dilated_into(x, weight, out_channels, kernel, dilation, bias, y);
  return y;
}

template <typename T>
void conv2d_dilated_backward(const Tensor<T>& x, std::span<const T> weight, int out_channels, int kernel, int dilation,
                             const Tensor<T>& grad_y, Tensor<T>* grad_x, std::span<T> grad_weight,
                             std::span<T> grad_bias) {
  check_conv_args(x.c, weight.size(), out_channels, kernel, dilation, grad_bias.size());
  if (grad_weight.size() != weight.size()) throw ShapeError("conv2d_backward: grad_weight size mismatch");
  if (grad_y.n != x.n || grad_y.c != out_channels || grad_y.h != x.h || grad_y.w != x.w)
    throw ShapeError("conv2d_backward: grad_y shape mismatch");

  const Geometry g(x.c, out_channels, kernel, dilation, x.h, x.w);
  const int taps = g.taps();

  // weight and bias gradients
  std::vector<T> acc(static_cast<std::size_t>(taps) * x.c * out_channels, T(0));
  std::vector<T> xp;
  for (int b = 0; b < x.n; ++b) {
    pad_image(x, b, g.pad, xp);
    dispatch_weight_grad(xp.data(), g, grad_y.data.data() + grad_y.offset(b, 0, 0, 0), acc.data());
  }
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < x.c; ++i)
      for (int t = 0; t < taps; ++t)
        grad_weight[(static_cast<std::size_t>(o) * x.c + i) * taps + t] +=
            acc[(static_cast<std::size_t>(t) * x.c + i) * out_channels + o];
  if (!grad_bias.empty()) {
    for (std::size_t p = 0; p < grad_y.pixels(); ++p)
      for (int o = 0; o < out_channels; ++o) grad_bias[static_cast<std::size_t>(o)] += grad_y.data[p * out_channels + o];
  }

  // input gradient: correlation of the zero-padded output gradient with the
  // spatially flipped, channel-transposed kernel
  if (grad_x != nullptr) {
    std::vector<T> flipped(weight.size());
    for (int o = 0; o < out_channels; ++o)
      for (int i = 0; i < x.c; ++i)
        for (int t = 0; t < taps; ++t)
          flipped[(static_cast<std::size_t>(i) * out_channels + o) * taps + t] =
              weight[(static_cast<std::size_t>(o) * x.c + i) * taps + (taps - 1 - t)];
    *grad_x = conv2d_dilated<T>(grad_y, flipped, x.c, kernel, dilation, {});
  }
}

namespace {

// Per-channel mean and summed squared deviation of an NHWC buffer; C > 0
// fixes the channel count at compile time.
template <typename T, int C>
void channel_moments(const T* __restrict zd, std::size_t px, int c_rt, double* __restrict mean, double* __restrict var) {
  const int c = C > 0 ? C : c_rt;
  for (std::size_t p = 0; p < px; ++p)
    for (int ch = 0; ch < c; ++ch) mean[ch] += zd[p * c + ch];
  for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(px);
  for (std::size_t p = 0; p < px; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const double d = zd[p * c + ch] - mean[ch];
      var[ch] += d * d;
    }
}

}  // namespace

template <typename T>
Tensor<T> adaptive_norm(const Tensor<T>& z, T lambda1, T lambda2, Tensor<T>* normalized, ChannelStats* stats) {
  const int c = z.c;
  const std::size_t px = z.pixels();
  if (px == 0) throw ShapeError("adaptive_norm: empty tensor");
  ChannelStats st;
  st.mean.assign(static_cast<std::size_t>(c), 0.0);
  st.inv_std.assign(static_cast<std::size_t>(c), 0.0);
  std::vector<double> var(static_cast<std::size_t>(c), 0.0);
  switch (c) {
    case 24: channel_moments<T, 24>(z.data.data(), px, c, st.mean.data(), var.data()); break;
    case 32: channel_moments<T, 32>(z.data.data(), px, c, st.mean.data(), var.data()); break;
    default: channel_moments<T, 0>(z.data.data(), px, c, st.mean.data(), var.data()); break;
  }
  for (int ch = 0; ch < c; ++ch)
    st.inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] / static_cast<double>(px) + kNormEpsilon);

  // out = lambda1 z + lambda2 (z - mean) inv_std = a z + b per channel
  std::vector<T> mean_t(st.mean.begin(), st.mean.end()), inv_t(st.inv_std.begin(), st.inv_std.end());
  Tensor<T> out(z.n, z.c, z.h, z.w);
  {
    const T* __restrict zd = z.data.data();
    T* __restrict od = out.data.data();
    const T* __restrict mt = mean_t.data();
    const T* __restrict it = inv_t.data();
    for (std::size_t p = 0; p < px; ++p)
      for (int ch = 0; ch < c; ++ch) {
        const T bn = (zd[p * c + ch] - mt[ch]) * it[ch];
        od[p * c + ch] = lambda1 * zd[p * c + ch] + lambda2 * bn;
      }
    if (normalized != nullptr) {
      *normalized = Tensor<T>(z.n, z.c, z.h, z.w);
      T* __restrict nd = normalized->data.data();
      for (std::size_t p = 0; p < px; ++p)
        for (int ch = 0; ch < c; ++ch) nd[p * c + ch] = (zd[p * c + ch] - mt[ch]) * it[ch];
    }
  }
  if (stats != nullptr) *stats = std::move(st);
  return out;
}

template <typename T>
void adaptive_norm_inplace(Tensor<T>& z, T lambda1, T lambda2, bool leaky_relu) {
  const int c = z.c;
  const std::size_t px = z.pixels();
  if (px == 0) throw ShapeError("adaptive_norm: empty tensor");
  std::vector<T> a(static_cast<std::size_t>(c), lambda1), b(static_cast<std::size_t>(c), T(0));
  if (lambda2 != T(0)) {
    std::vector<double> mean(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
    switch (c) {
      case 24: channel_moments<T, 24>(z.data.data(), px, c, mean.data(), var.data()); break;
      case 32: channel_moments<T, 32>(z.data.data(), px, c, mean.data(), var.data()); break;
      default: channel_moments<T, 0>(z.data.data(), px, c, mean.data(), var.data()); break;
    }
    for (std::size_t ch = 0; ch < a.size(); ++ch) {
      const T inv = static_cast<T>(1.0 / std::sqrt(var[ch] / static_cast<double>(px) + kNormEpsilon));
      a[ch] = lambda1 + lambda2 * inv;
      b[ch] = -lambda2 * inv * static_cast<T>(mean[ch]);
    }
  }
  T* __restrict zd = z.data.data();
  const T* __restrict ap = a.data();
  const T* __restrict bp = b.data();
  const T slope = leaky_relu ? static_cast<T>(kLeakySlope) : T(1);
  for (std::size_t p = 0; p < px; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const T v = ap[ch] * zd[p * c + ch] + bp[ch];
      zd[p * c + ch] = std::max(v, slope * v);
    }
}

template <typename T>
Tensor<T> adaptive_norm_backward(const Tensor<T>& z, const Tensor<T>& normalized, const ChannelStats& stats, T lambda1,
                                 T lambda2, const Tensor<T>& grad_out, T& grad_lambda1, T& grad_lambda2) {
  if (!z.same_shape(grad_out) || !z.same_shape(normalized)) throw ShapeError("adaptive_norm_backward: shape mismatch");
  const int c = z.c;
  const std::size_t px = z.pixels();
  double gl1 = 0.0, gl2 = 0.0;
  std::vector<double> sum_g(static_cast<std::size_t>(c), 0.0), sum_gb(static_cast<std::size_t>(c), 0.0);
  for (std::size_t p = 0; p < px; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t k = p * c + ch;
      const double g = grad_out.data[k];
      gl1 += g * z.data[k];
      gl2 += g * normalized.data[k];
      sum_g[static_cast<std::size_t>(ch)] += g;
      sum_gb[static_cast<std::size_t>(ch)] += g * normalized.data[k];
    }
  grad_lambda1 += static_cast<T>(gl1);
  grad_lambda2 += static_cast<T>(gl2);

  // d BN / d Z applied to g: inv_std * (g - mean(g) - B * mean(g * B))
  std::vector<T> mg(static_cast<std::size_t>(c)), mgb(static_cast<std::size_t>(c)), scale(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    mg[static_cast<std::size_t>(ch)] = static_cast<T>(sum_g[static_cast<std::size_t>(ch)] / static_cast<double>(px));
    mgb[static_cast<std::size_t>(ch)] = static_cast<T>(sum_gb[static_cast<std::size_t>(ch)] / static_cast<double>(px));
    scale[static_cast<std::size_t>(ch)] = static_cast<T>(static_cast<double>(lambda2) * stats.inv_std[static_cast<std::size_t>(ch)]);
  }
  Tensor<T> gz(z.n, z.c, z.h, z.w);
  for (std::size_t p = 0; p < px; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t k = p * c + ch;
      const T g = grad_out.data[k];
      gz.data[k] = lambda1 * g + scale[static_cast<std::size_t>(ch)] *
                                     (g - mg[static_cast<std::size_t>(ch)] - normalized.data[k] * mgb[static_cast<std::size_t>(ch)]);
    }
  return gz;
}

template <typename T>
void lrelu_inplace(Tensor<T>& z) {
  const T slope = static_cast<T>(kLeakySlope);
  for (T& v : z.data) v = std::max(slope * v, v);
}

template <typename T>
Tensor<T> lrelu(Tensor<T> z) {
  lrelu_inplace(z);
  return z;
}

template <typename T>
Tensor<T> lrelu_backward(const Tensor<T>& z, Tensor<T> grad) {
  if (!z.same_shape(grad)) throw ShapeError("lrelu_backward: shape mismatch");
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t k = 0; k < grad.size(); ++k)
    if (!(z.data[k] > T(0))) grad.data[k] *= slope;
  return grad;
}

#define NLTMO_INSTANTIATE(T)                                                                                        \
  template Tensor<T> conv2d_dilated<T>(const Tensor<T>&, std::span<const T>, int, int, int, std::span<const T>);   \
  template void conv2d_dilated_into<T>(const Tensor<T>&, std::span<const T>, int, int, int, std::span<const T>,    \
                                       Tensor<T>&);                                                               \
  template void conv2d_dilated_backward<T>(const Tensor<T>&, std::span<const T>, int, int, int, const Tensor<T>&,  \
                                           Tensor<T>*, std::span<T>, std::span<T>);                                \
  template Tensor<T> adaptive_norm<T>(const Tensor<T>&, T, T, Tensor<T>*, ChannelStats*);                          \
  template void adaptive_norm_inplace<T>(Tensor<T>&, T, T, bool);                                                  \
  template Tensor<T> adaptive_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, const ChannelStats&, T, T,      \
                                               const Tensor<T>&, T&, T&);                                          \
  template Tensor<T> lrelu<T>(Tensor<T>);                                                                          \
  template void lrelu_inplace<T>(Tensor<T>&);                                                                      \
  template Tensor<T> lrelu_backward<T>(const Tensor<T>&, Tensor<T>);

NLTMO_INSTANTIATE(float)
NLTMO_INSTANTIATE(double)

#undef NLTMO_INSTANTIATE

}  // namespace nltmo::nn

#include <cmath>

#include "nltmo/metrics.hpp"

namespace nltmo {

namespace {

Raster gamma_power(const Raster& x, double gamma, const char* what) {
  Raster out(x.width, x.height);
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x.data[k] > 0.0)) throw DegenerateInputError(std::string(what) + ": luminance must be strictly positive");
    out.data[k] = std::pow(x.data[k], gamma);
  }
  return out;
}

}  // namespace

NlpdReference::NlpdReference(const Raster& s, NlpdConfig cfg) : cfg_(cfg), width_(s.width), height_(s.height) {
  if (cfg_.levels < 1) throw ShapeError("nlpd: level count must be >= 1");
  ref_ = normalize_pyramid(build_laplacian(gamma_power(s, cfg_.gamma, "nlpd"), cfg_.levels), cfg_.norm);
}

double NlpdReference::value(const Raster& i) const { return evaluate(gamma_power(i, cfg_.gamma, "nlpd"), nullptr); }

double NlpdReference::value_and_gradient(const Raster& i, Raster& grad) const {
  const Raster xi = gamma_power(i, cfg_.gamma, "nlpd");
  const double v = evaluate(xi, &grad);
  for (std::size_t k = 0; k < grad.size(); ++k) grad.data[k] *= cfg_.gamma * xi.data[k] / i.data[k];
  return v;
}

double NlpdReference::value_gamma(const Raster& xi) const { return evaluate(xi, nullptr); }

double NlpdReference::value_and_gradient_gamma(const Raster& xi, Raster& grad) const { return evaluate(xi, &grad); }

double NlpdReference::evaluate(const Raster& xi, Raster* grad) const {
  if (xi.width != width_ || xi.height != height_) throw ShapeError("nlpd: dimension mismatch");
  const LaplacianPyramid lap = build_laplacian(xi, cfg_.levels);
  const NormalizedPyramid test = normalize_pyramid(lap, cfg_.norm);
  const int m = test.size();
  const double a = cfg_.alpha, b = cfg_.beta;

  std::vector<double> means(static_cast<std::size_t>(m));
  double total = 0.0;
  for (int l = 0; l < m; ++l) {
    const Raster& y0 = ref_.levels[static_cast<std::size_t>(l)];
    const Raster& y1 = test.levels[static_cast<std::size_t>(l)];
    double acc = 0.0;
    for (std::size_t k = 0; k < y0.size(); ++k) acc += std::pow(std::abs(y0.data[k] - y1.data[k]), a);
    means[static_cast<std::size_t>(l)] = acc / static_cast<double>(y0.size());
    // a zero subband contributes exactly zero (0^(b/a) is 0, not NaN)
    if (acc > 0.0) total += std::pow(means[static_cast<std::size_t>(l)], b / a);
  }
  total /= m;
  const double value = total > 0.0 ? std::pow(total, 1.0 / b) : 0.0;

  if (grad != nullptr) {
    if (value == 0.0) {
      *grad = Raster(xi.width, xi.height);
      return value;
    }
    const double d_total = std::pow(total, 1.0 / b - 1.0) / b;
    NormalizedPyramid gy;
    gy.levels.reserve(static_cast<std::size_t>(m));
    for (int l = 0; l < m; ++l) {
      const Raster& y0 = ref_.levels[static_cast<std::size_t>(l)];
      const Raster& y1 = test.levels[static_cast<std::size_t>(l)];
      Raster g(y1.width, y1.height);
      const double mean = means[static_cast<std::size_t>(l)];
      if (mean > 0.0) {
        const double d_mean = d_total / m * (b / a) * std::pow(mean, b / a - 1.0) / static_cast<double>(y1.size());
        for (std::size_t k = 0; k < y1.size(); ++k) {
          const double d = y1.data[k] - y0.data[k];
          const double ad = std::abs(d);
          if (ad > 0.0) g.data[k] = d_mean * a * std::pow(ad, a - 1.0) * (d > 0.0 ? 1.0 : -1.0);
        }
      }
      gy.levels.push_back(std::move(g));
    }
    *grad = build_laplacian_adjoint(normalize_pyramid_adjoint(lap, gy, cfg_.norm));
  }
  return value;
}

double nlpd(const Raster& s, const Raster& i, const NlpdConfig& cfg) {
  require_same_shape(s, i, "nlpd");
  return NlpdReference(s, cfg).value(i);
}

Raster nlpd_gradient(const Raster& s, const Raster& i, const NlpdConfig& cfg) {
  require_same_shape(s, i, "nlpd_gradient");
  Raster g;
  NlpdReference(s, cfg).value_and_gradient(i, g);
  return g;
}

}  // namespace nltmo

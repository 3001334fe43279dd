#include <algorithm>
#include <cmath>
#include <numeric>

#include "nltmo/metrics.hpp"

namespace nltmo {

int select_structure_index(std::span<const double> contrasts, StructureSelector selector) {
  if (contrasts.empty()) throw ShapeError("select_structure_index: empty contrast list");
  const int k = static_cast<int>(contrasts.size());
  if (selector == StructureSelector::max_contrast) {
    return static_cast<int>(std::max_element(contrasts.begin(), contrasts.end()) - contrasts.begin());
  }
  // Order statistic (K-1)/2 (0-based): the lower middle one for even K.
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return contrasts[static_cast<std::size_t>(a)] < contrasts[static_cast<std::size_t>(b)];
  });
  return idx[static_cast<std::size_t>((k - 1) / 2)];
}

namespace {

void validate(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg) {
  if (stack.k() < 1) throw ShapeError("mef_ssim: empty stack");
  for (const Raster& im : stack.images) require_same_shape(im, stack.images.front(), "mef_ssim: stack");
  require_same_shape(fused, stack.images.front(), "mef_ssim");
  if (cfg.window < 2) throw ShapeError("mef_ssim: window must be >= 2");
  if (cfg.window > fused.width || cfg.window > fused.height) throw ShapeError("mef_ssim: window larger than image");
}

}  // namespace

double mef_ssim_value_and_gradient(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg,
                                   Raster* grad) {
  validate(stack, fused, cfg);
  const int kk = stack.k();
  const int win = cfg.window;
  const int w = fused.width, h = fused.height;
  const int nx = w - win + 1, ny = h - win + 1;
  const double n = static_cast<double>(win) * win;
  const double windows = static_cast<double>(nx) * ny;

  std::vector<double> global_mean(static_cast<std::size_t>(kk));
  std::vector<double> global_term(static_cast<std::size_t>(kk));
  for (int k = 0; k < kk; ++k) {
    global_mean[static_cast<std::size_t>(k)] = raster_mean(stack.images[static_cast<std::size_t>(k)]);
    const double dg = global_mean[static_cast<std::size_t>(k)] - cfg.tau;
    global_term[static_cast<std::size_t>(k)] = dg * dg / (2.0 * cfg.sigma_g * cfg.sigma_g);
  }

  if (grad != nullptr) *grad = Raster(w, h);
  std::vector<double> mu(static_cast<std::size_t>(kk)), contrast(static_cast<std::size_t>(kk));
  double total = 0.0;

  for (int wy = 0; wy < ny; ++wy) {
    for (int wx = 0; wx < nx; ++wx) {
      for (int k = 0; k < kk; ++k) {
        const Raster& im = stack.images[static_cast<std::size_t>(k)];
        double s = 0.0;
        for (int y = wy; y < wy + win; ++y)
          for (int x = wx; x < wx + win; ++x) s += im.at(x, y);
        const double m = s / n;
        double ss = 0.0;
        for (int y = wy; y < wy + win; ++y)
          for (int x = wx; x < wx + win; ++x) {
            const double d = im.at(x, y) - m;
            ss += d * d;
          }
        mu[static_cast<std::size_t>(k)] = m;
        contrast[static_cast<std::size_t>(k)] = std::sqrt(ss);
      }

      // desired intensity: well-exposedness weighted mean
      double wsum = 0.0, lsum = 0.0;
      for (int k = 0; k < kk; ++k) {
        const double dl = mu[static_cast<std::size_t>(k)] - cfg.tau;
        const double wk = std::exp(-global_term[static_cast<std::size_t>(k)] - dl * dl / (2.0 * cfg.sigma_l * cfg.sigma_l));
        wsum += wk;
        lsum += wk * mu[static_cast<std::size_t>(k)];
      }
      const double l_hat =
          wsum > 0.0 ? lsum / wsum : std::accumulate(mu.begin(), mu.end(), 0.0) / static_cast<double>(kk);
      const double c_hat = *std::max_element(contrast.begin(), contrast.end());
      const int sel = select_structure_index(contrast, cfg.selector);
      const double c_sel = contrast[static_cast<std::size_t>(sel)];
      const bool flat = c_sel < 1e-8;
      const Raster& xs = stack.images[static_cast<std::size_t>(sel)];
      const double mu_s = mu[static_cast<std::size_t>(sel)];

      double fs = 0.0;
      for (int y = wy; y < wy + win; ++y)
        for (int x = wx; x < wx + win; ++x) fs += fused.at(x, y);
      const double mu_f = fs / n;
      double var_f = 0.0, cov = 0.0;
      for (int y = wy; y < wy + win; ++y)
        for (int x = wx; x < wx + win; ++x) {
          const double df = fused.at(x, y) - mu_f;
          var_f += df * df;
          cov += (xs.at(x, y) - mu_s) * df;
        }
      var_f /= n;
      cov /= n;

      const double gain = flat ? 0.0 : c_hat / c_sel;  // x_hat - l_hat = gain * (x_sel - mu_sel)
      const double var_x = flat ? 0.0 : c_hat * c_hat / n;
      const double cov_xf = gain * cov;

      const double a1 = 2.0 * l_hat * mu_f + cfg.c1;
      const double a2 = 2.0 * cov_xf + cfg.c2;
      const double b1 = l_hat * l_hat + mu_f * mu_f + cfg.c1;
      const double b2 = var_x + var_f + cfg.c2;
      const double score = a1 * a2 / (b1 * b2);
      total += score;

      if (grad != nullptr) {
        const double d_mu = (2.0 * l_hat * a2 / (b1 * b2) - score * 2.0 * mu_f / b1) / windows;
        const double d_var = -score / b2 / windows;
        const double d_cov = 2.0 * a1 / (b1 * b2) / windows;
        for (int y = wy; y < wy + win; ++y)
          for (int x = wx; x < wx + win; ++x) {
            const double df = fused.at(x, y) - mu_f;
            grad->at(x, y) += (d_mu + d_var * 2.0 * df + d_cov * gain * (xs.at(x, y) - mu_s)) / n;
          }
      }
    }
  }
  return total / windows;
}

double mef_ssim_variant(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg) {
  return mef_ssim_value_and_gradient(stack, fused, cfg, nullptr);
}

Raster mef_ssim_gradient(const ExposureStack& stack, const Raster& fused, const MefSsimConfig& cfg) {
  Raster g;
  mef_ssim_value_and_gradient(stack, fused, cfg, &g);
  return g;
}

}  // namespace nltmo

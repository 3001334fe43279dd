#include "nltmo/nlpd_opt.hpp"

#include <algorithm>
#include <cmath>

namespace nltmo {

void OptConfig::validate() const {
  if (max_iters < 0) throw Error("nlpd_opt: max_iters must be >= 0");
  if (!(step_size > 0.0) || !(tol >= 0.0) || !(growth >= 1.0) || max_backtracks < 1 || window < 1)
    throw Error("nlpd_opt: step_size, tol, growth, max_backtracks and window must be positive");
  if (!(display_min > 0.0 && display_max > display_min)) throw Error("nlpd_opt: invalid display range");
}

LuminanceMap nlpd_opt_initialize(const Raster& s, const OptConfig& cfg) {
  if (s.empty()) throw ShapeError("nlpd_opt: empty image");
  const double lo = raster_min(s), hi = raster_max(s);
  if (!(lo > 0.0)) throw DegenerateInputError("nlpd_opt: luminance must be strictly positive");
  LuminanceMap out(s.width, s.height, LuminanceUnits::cd_per_m2);
  if (lo >= cfg.display_min && hi <= cfg.display_max) {
    out.data = s.data;
    return out;
  }
  const double span = hi > lo ? (cfg.display_max - cfg.display_min) / (hi - lo) : 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    out.data[k] = std::clamp(cfg.display_min + span * (s.data[k] - lo), cfg.display_min, cfg.display_max);
  return out;
}

OptResult nlpd_opt(const LuminanceMap& s, const OptConfig& cfg) {
  cfg.validate();
  if (s.units != LuminanceUnits::cd_per_m2) throw DegenerateInputError("nlpd_opt: input is not calibrated");
  const NlpdReference ref(s, cfg.metric);

  OptResult r;
  r.image = nlpd_opt_initialize(s, cfg);
  Raster grad;
  double loss = ref.value_and_gradient(r.image, grad);
  double eta = 0.0;
  {
    double gmax = 0.0;
    for (double g : grad.data) gmax = std::max(gmax, std::abs(g));
    eta = gmax > 0.0 ? cfg.step_size / gmax : 0.0;
  }
  r.trace.loss.push_back(loss);
  r.trace.step.push_back(eta);
  if (eta == 0.0) {
    r.trace.converged = true;
    return r;
  }

  LuminanceMap trial(s.width, s.height, LuminanceUnits::cd_per_m2);
  Raster trial_grad;
  for (int it = 0; it < cfg.max_iters; ++it) {
    bool accepted = false;
    for (int bt = 0; bt < cfg.max_backtracks && !accepted; ++bt) {
      bool moved = false;
      for (std::size_t k = 0; k < trial.size(); ++k) {
        trial.data[k] = std::clamp(r.image.data[k] - eta * grad.data[k], cfg.display_min, cfg.display_max);
        moved = moved || trial.data[k] != r.image.data[k];
      }
      if (!moved) break;  // projected gradient vanishes: stationary point
      const double trial_loss = ref.value_and_gradient(trial, trial_grad);
      if (trial_loss < loss) {
        accepted = true;
        std::swap(r.image.data, trial.data);
        std::swap(grad, trial_grad);
        loss = trial_loss;
        ++r.trace.accepted;
        r.trace.loss.push_back(loss);
        r.trace.step.push_back(eta);
        eta *= cfg.growth;
        const auto& L = r.trace.loss;
        if (static_cast<int>(L.size()) > cfg.window) {
          const double before = L[L.size() - 1 - static_cast<std::size_t>(cfg.window)];
          if ((before - loss) / std::max(before, 1e-300) < cfg.tol * cfg.window) r.trace.converged = true;
        }
      } else {
        ++r.trace.rejected;
        eta *= 0.5;
      }
    }
    if (!accepted) {
      r.trace.converged = true;
      r.trace.loss.push_back(loss);
      r.trace.step.push_back(eta);
    }
    if (r.trace.converged) break;
  }
  return r;
}

}  // namespace nltmo

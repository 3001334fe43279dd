#include "nltmo/nn/adam.hpp"

#include <cmath>

namespace nltmo::nn {

template <typename T>
Adam<T>::Adam(const CanConfig& cfg, AdamOptions opt)
    : cfg_(cfg), opt_(opt), m_(CanParams<T>::zeros(cfg)), v_(CanParams<T>::zeros(cfg)) {}

template <typename T>
void Adam<T>::step(CanParams<T>& params, const CanParams<T>& grads, double lr) {
  check_params(cfg_, params);
  check_params(cfg_, grads);
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  auto pb = params.blocks(cfg_);
  auto gb = grads.blocks(cfg_);
  auto mb = m_.blocks(cfg_);
  auto vb = v_.blocks(cfg_);
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t k = 0; k < pb[b].size(); ++k) {
      const double g = gb[b][k];
      const double m = opt_.beta1 * mb[b][k] + (1.0 - opt_.beta1) * g;
      const double v = opt_.beta2 * vb[b][k] + (1.0 - opt_.beta2) * g * g;
      mb[b][k] = static_cast<T>(m);
      vb[b][k] = static_cast<T>(v);
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      pb[b][k] = static_cast<T>(pb[b][k] - lr * m_hat / (std::sqrt(v_hat) + opt_.epsilon));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace nltmo::nn

#pragma once

#include "nltmo/nn/can.hpp"

namespace nltmo::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over every trainable block of a CAN.
template <typename T>
class Adam {
 public:
  Adam(const CanConfig& cfg, AdamOptions opt = {});

  void step(CanParams<T>& params, const CanParams<T>& grads, double lr);

  long long steps() const { return t_; }
  const CanParams<T>& first_moment() const { return m_; }
  const CanParams<T>& second_moment() const { return v_; }

 private:
  CanConfig cfg_;
  AdamOptions opt_;
  CanParams<T> m_;
  CanParams<T> v_;
  long long t_ = 0;
};

}  // namespace nltmo::nn

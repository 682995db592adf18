/**
 * @file adam.h
 * @brief Adam optimizer with bias correction, plus global-norm clipping.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tensor/tensor.h"

namespace quartet {

/// Scales all gradients so their global L2 norm does not exceed max_norm.
/// Returns the pre-clip norm.
template <typename S>
double clipGlobalNorm(std::vector<Tensor<S>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (S g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto& p : params) {
      for (S& g : p.grad()) g *= factor;
    }
  }
  return norm;
}

template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor<S>> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      slots_[i].m.assign(static_cast<size_t>(params_[i].numel()), S(0));
      slots_[i].v.assign(static_cast<size_t>(params_[i].numel()), S(0));
    }
  }

  void step(double lr) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto value = params_[i].value();
      auto grad = params_[i].grad();
      auto& slot = slots_[i];
      for (size_t j = 0; j < value.size(); ++j) {
        const double g = grad[j];
        const double m = beta1_ * static_cast<double>(slot.m[j]) + (1.0 - beta1_) * g;
        const double v = beta2_ * static_cast<double>(slot.v[j]) + (1.0 - beta2_) * g * g;
        slot.m[j] = static_cast<S>(m);
        slot.v[j] = static_cast<S>(v);
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        value[j] -= static_cast<S>(lr * m_hat / (std::sqrt(v_hat) + eps_));
      }
    }
  }

  int64_t stepCount() const { return step_count_; }
  void setStepCount(int64_t n) { step_count_ = n; }

  size_t slotCount() const { return slots_.size(); }
  std::vector<S>& firstMoment(size_t i) { return slots_[i].m; }
  std::vector<S>& secondMoment(size_t i) { return slots_[i].v; }

 private:
  struct Slot {
    std::vector<S> m, v;
  };
  std::vector<Tensor<S>> params_;
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  int64_t step_count_ = 0;
};

}  // namespace quartet

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cadmr/graph.hpp"
#include "cadmr/matrix.hpp"

namespace cadmr {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-6;
};

// Bias-corrected Adam over a fixed parameter list. Moments are kept in the
// same order as the parameters handed to the constructor.
template <class S>
class AdamState {
 public:
  AdamState(const std::vector<Parameter<S>*>& params, AdamConfig cfg)
      : params_(params), cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter<S>* p : params) {
      m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // One update from the currently accumulated gradients; gradients are
  // zeroed afterwards so the next step starts clean.
  void step() {
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(cfg_.learning_rate);
    const S eps = static_cast<S>(cfg_.epsilon);
    const S corr1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S corr2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>& p = *params_[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
      Matrix<S> m_hat = m_[i] / corr1;
      Matrix<S> v_hat = v_[i] / corr2;
      p.value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
      p.zero_grad();
    }
  }

  void zero_all_grads() {
    for (Parameter<S>* p : params_) p->zero_grad();
  }

 private:
  std::vector<Parameter<S>*> params_;
  AdamConfig cfg_;
  std::vector<Matrix<S>> m_;
  std::vector<Matrix<S>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace cadmr

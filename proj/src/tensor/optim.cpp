#include "kgnn/optim.hpp"

#include <cmath>
#include <numbers>

#include "kgnn/error.hpp"

namespace kgnn {

Optimizer Optimizer::sgd_cosine(double base_lr, std::size_t total_steps) {
  if (!(base_lr > 0)) throw ConfigError("learning rate must be positive");
  if (total_steps == 0) throw ConfigError("sgd_cosine needs total_steps > 0");
  Optimizer o(OptimizerKind::SgdCosine, base_lr);
  o.total_steps_ = total_steps;
  return o;
}

Optimizer Optimizer::sgd(double lr) {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  return Optimizer(OptimizerKind::Sgd, lr);
}

Optimizer Optimizer::adam(double lr, double beta1, double beta2, double epsilon) {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  Optimizer o(OptimizerKind::Adam, lr);
  o.beta1_ = beta1;
  o.beta2_ = beta2;
  o.epsilon_ = epsilon;
  return o;
}

double Optimizer::cosine_lr(double base_lr, std::size_t t, std::size_t total_steps) {
  const double frac = static_cast<double>(t) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double Optimizer::current_lr() const {
  if (kind_ == OptimizerKind::SgdCosine) return cosine_lr(base_lr_, step_count_, total_steps_);
  return base_lr_;
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size())
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " grads");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i]->shape())
      throw DimensionError("optimizer: param " + shape_to_string(params[i]->shape()) + " vs grad " +
                           shape_to_string(grads[i]->shape()));
  if (kind_ == OptimizerKind::SgdCosine && step_count_ >= total_steps_)
    throw ContractError("optimizer: cosine schedule exhausted after " + std::to_string(total_steps_) + " steps");

  if (kind_ == OptimizerKind::Adam) {
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->shape()));
        v_.push_back(Tensor::zeros(p->shape()));
      }
    } else if (m_.size() != params.size()) {
      throw DimensionError("optimizer: parameter count changed between steps");
    }
    const double t = static_cast<double>(step_count_ + 1);
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (m_[i].shape() != params[i]->shape()) throw DimensionError("optimizer: moment shape mismatch");
      double* p = params[i]->ptr();
      const double* g = grads[i]->ptr();
      double* m = m_[i].ptr();
      double* v = v_[i].ptr();
      for (std::size_t j = 0; j < params[i]->numel(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p[j] -= base_lr_ * mhat / (std::sqrt(vhat) + epsilon_);
      }
    }
  } else {
    const double lr = current_lr();
    for (std::size_t i = 0; i < params.size(); ++i) {
      double* p = params[i]->ptr();
      const double* g = grads[i]->ptr();
      for (std::size_t j = 0; j < params[i]->numel(); ++j) p[j] -= lr * g[j];
    }
  }
  ++step_count_;
}

}  // namespace kgnn

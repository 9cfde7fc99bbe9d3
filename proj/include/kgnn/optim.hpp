#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kgnn/tensor.hpp"

namespace kgnn {

enum class OptimizerKind { SgdCosine, Sgd, Adam };

/// SGD with optional cosine annealing, or Adam.
///
/// sgd_cosine: p <- p - lr_t * g, lr_t = base_lr * 0.5 * (1 + cos(pi * t / T)).
/// sgd:        constant learning rate.
/// adam:       bias-corrected first/second moment update.
class Optimizer {
 public:
  static Optimizer sgd_cosine(double base_lr, std::size_t total_steps);
  static Optimizer sgd(double lr);
  static Optimizer adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  OptimizerKind kind() const noexcept { return kind_; }
  double base_lr() const noexcept { return base_lr_; }
  std::size_t step_count() const noexcept { return step_count_; }
  std::size_t total_steps() const noexcept { return total_steps_; }

  /// Learning rate that the next step will apply.
  double current_lr() const;
  /// Cosine schedule value at step t of T.
  static double cosine_lr(double base_lr, std::size_t t, std::size_t total_steps);

  /// Applies one update; params[i] and grads[i] must share a shape.
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

 private:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), base_lr_(lr) {}

  OptimizerKind kind_;
  double base_lr_;
  std::size_t total_steps_ = 0;
  std::size_t step_count_ = 0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace kgnn

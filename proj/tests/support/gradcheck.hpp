#pragma once

// Central finite-difference gradient checking shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "kgnn/rng.hpp"
#include "kgnn/tape.hpp"

namespace kgnn::testing {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.constant(x));
  return tape.value(fn(tape, vars)).item();
}

/// Largest norm-wise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over all inputs. Inputs whose gradients are both exactly zero count as 0.
inline double max_relative_error(const ScalarFn& fn, const std::vector<Tensor>& inputs, double h = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.parameter(x));
  const Gradients grads = backward(tape, fn(tape, vars));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = grads.of(vars[k]);
    std::vector<Tensor> probe = inputs;
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = inputs[k][i];
      probe[k][i] = orig + h;
      const double fp = evaluate(fn, probe);
      probe[k][i] = orig - h;
      const double fm = evaluate(fn, probe);
      probe[k][i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    if (denom > 0) worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

/// Contracts a tensor-valued output to a scalar with fixed random weights so
/// every output component contributes to the checked gradient.
inline Var random_contraction(Tape& t, Var out, std::uint64_t seed) {
  Rng rng(seed);
  auto w = std::make_shared<Tensor>(Tensor::uniform(t.value(out).shape(), -1.0, 1.0, rng));
  return ops::weighted_sum(t, out, std::move(w));
}

}  // namespace kgnn::testing

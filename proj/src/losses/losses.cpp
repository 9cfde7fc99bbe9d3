#include "kgnn/losses.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>

#include "kgnn/error.hpp"

namespace kgnn::losses {
namespace {

constexpr double kUnitTolerance = 1e-9;

void require_unit_rows(const Tensor& x, const char* what) {
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    double n = 0;
    for (std::size_t c = 0; c < x.dim(1); ++c) n += x.at(r, c) * x.at(r, c);
    if (std::abs(std::sqrt(n) - 1.0) > kUnitTolerance)
      throw ContractError(std::string(what) + " row " + std::to_string(r) + " is not unit norm");
  }
}

void check_batch(const Tape& t, Var z, std::span<const std::size_t> y, double tau) {
  if (!(tau > 0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau));
  const Tensor& zv = t.value(z);
  if (zv.rank() != 2) throw DimensionError("projections must be a matrix, got " + shape_to_string(zv.shape()));
  if (zv.dim(0) != y.size())
    throw DimensionError(std::to_string(zv.dim(0)) + " projections but " + std::to_string(y.size()) + " labels");
  if (y.size() < 2) throw ContractError("contrastive batch needs at least 2 samples");
  require_unit_rows(zv, "projection");
}

/// Shared core: anchors [2N x d] (one row per batch element).
Var contrastive_core(Tape& t, Var anchors, Var z, std::span<const std::size_t> y, double tau) {
  const std::size_t n = y.size();
  std::unordered_map<std::size_t, std::size_t> count;
  for (std::size_t l : y) ++count[l];

  auto mask = std::make_shared<Tensor>(Tensor::full({n, n}, 1.0));
  auto pos = std::make_shared<Tensor>(Tensor::zeros({n, n}));
  auto lse_weight = std::make_shared<Tensor>(Tensor::zeros({n}));
  for (std::size_t i = 0; i < n; ++i) {
    (*mask)[i * n + i] = 0.0;
    const std::size_t positives = count[y[i]] - 1;
    if (positives == 0) continue;
    const double w = 1.0 / static_cast<double>(positives);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && y[j] == y[i]) (*pos)[i * n + j] = -w;
    (*lse_weight)[i] = 1.0;
  }

  const Var s = ops::scale(t, ops::matmul(t, anchors, ops::transpose(t, z)), 1.0 / tau);
  return ops::add(t, ops::weighted_sum(t, s, pos),
                  ops::weighted_sum(t, ops::masked_logsumexp_rows(t, s, mask), lse_weight));
}

}  // namespace

Var kg_contrastive_loss(Tape& t, Var z, std::span<const std::size_t> y, const Tensor& anchors, double tau) {
  check_batch(t, z, y, tau);
  if (anchors.rank() != 2 || anchors.dim(1) != t.value(z).dim(1))
    throw DimensionError("anchor table " + shape_to_string(anchors.shape()) + " does not match projections " +
                         shape_to_string(t.value(z).shape()));
  require_unit_rows(anchors, "anchor");
  const std::size_t d = anchors.dim(1);
  Tensor gathered({y.size(), d});
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= anchors.dim(0)) throw MappingError("no anchor vector for label id " + std::to_string(y[i]));
    std::copy_n(anchors.ptr() + y[i] * d, d, gathered.ptr() + i * d);
  }
  return contrastive_core(t, t.constant(std::move(gathered)), z, y, tau);
}

Var anchored_contrastive_loss(Tape& t, Var z, std::span<const std::size_t> y, Var anchor_rows, double tau) {
  check_batch(t, z, y, tau);
  const Tensor& a = t.value(anchor_rows);
  if (a.shape() != t.value(z).shape())
    throw DimensionError("anchor rows " + shape_to_string(a.shape()) + " do not match projections " +
                         shape_to_string(t.value(z).shape()));
  require_unit_rows(a, "anchor");
  return contrastive_core(t, anchor_rows, z, y, tau);
}

Var supcon_loss(Tape& t, Var z, std::span<const std::size_t> y, double tau) {
  check_batch(t, z, y, tau);
  return contrastive_core(t, z, z, y, tau);
}

Var cross_entropy(Tape& t, Var logits, std::span<const std::size_t> y) {
  const Tensor& x = t.value(logits);
  if (x.rank() != 2) throw DimensionError("logits must be a matrix, got " + shape_to_string(x.shape()));
  const std::size_t b = x.dim(0), c = x.dim(1);
  if (c < 2) throw ContractError("cross-entropy needs at least 2 classes");
  if (b != y.size()) throw DimensionError(std::to_string(b) + " logit rows but " + std::to_string(y.size()) + " labels");
  const double inv = 1.0 / static_cast<double>(b);
  auto pick = std::make_shared<Tensor>(Tensor::zeros({b, c}));
  for (std::size_t i = 0; i < b; ++i) {
    if (y[i] >= c) throw ContractError("label " + std::to_string(y[i]) + " out of range for " + std::to_string(c) + " classes");
    (*pick)[i * c + y[i]] = -inv;
  }
  auto mask = std::make_shared<Tensor>(Tensor::full({b, c}, 1.0));
  auto mean = std::make_shared<Tensor>(Tensor::full({b}, inv));
  return ops::add(t, ops::weighted_sum(t, ops::masked_logsumexp_rows(t, logits, mask), mean),
                  ops::weighted_sum(t, logits, pick));
}

}  // namespace kgnn::losses

#pragma once

#include <cstddef>
#include <span>

#include "kgnn/tape.hpp"

namespace kgnn::losses {

inline constexpr double kDefaultTemperature = 0.5;

/// Contrastive loss of image projections z [2N x d] against per-label anchor
/// vectors. Row l of `anchors` is the unit-norm vector for label l.
///
///   L = sum_i -1/(P_i) sum_{j != i, y_j = y_i} log( exp(a_i . z_j / tau) / sum_{k != i} exp(a_i . z_k / tau) )
///
/// with a_i = anchors[y_i] and P_i the number of positives of i. Anchors
/// without positives contribute 0. Rows of z and anchors must be unit norm.
Var kg_contrastive_loss(Tape& t, Var z, std::span<const std::size_t> y, const Tensor& anchors,
                        double tau = kDefaultTemperature);

/// The same formula with one anchor row per batch element: anchor_rows is
/// [2N x d] with row i used as a_i. kg_contrastive_loss gathers rows from the
/// label table; supcon_loss passes z itself.
Var anchored_contrastive_loss(Tape& t, Var z, std::span<const std::size_t> y, Var anchor_rows,
                              double tau = kDefaultTemperature);
/// Same formula with a_i = z_i.
Var supcon_loss(Tape& t, Var z, std::span<const std::size_t> y, double tau = kDefaultTemperature);

/// Mean softmax cross-entropy of logits [B x C].
Var cross_entropy(Tape& t, Var logits, std::span<const std::size_t> y);

}  // namespace kgnn::losses

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "kgnn/tensor.hpp"

namespace kgnn {

using NodeId = std::uint32_t;

/// Handle to a node on a Tape.
struct Var {
  NodeId id = 0;
};

/// Compressed sparse row matrix used as a constant operand (graph adjacency).
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return values.size(); }
};

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddRowBias,
  Relu,
  Conv2d,
  AddChannelBias,
  MaxPool2,
  GlobalAvgPool,
  L2NormalizeRows,
  Sum,
  MaskedLogSumExpRows,
  WeightedSum,
  SparseMatMul,
  Reshape,
};

const char* op_name(Op op);

/// One recorded primitive application. Forward values are cached in `value`.
struct Node {
  Op op = Op::Leaf;
  std::vector<NodeId> inputs;
  Tensor value;
  bool requires_grad = false;

  std::size_t stride = 1;
  std::size_t padding = 0;
  double factor = 1.0;
  std::shared_ptr<const Tensor> aux;          // mask or weights
  std::shared_ptr<const SparseMatrix> sparse;
  std::vector<std::uint32_t> argmax;          // max-pool winners (flat input index)
};

/// Append-only record of a computation. Node ids are assigned in creation
/// order, so every input id is smaller than its consumer's id.
class Tape {
 public:
  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(Var v) const { return node(v.id).value; }
  const Node& node(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool contains(Var v) const noexcept { return v.id < nodes_.size(); }

  /// Appends a node; checks input ids and rejects non-finite values.
  Var record(Node node);

 private:
  std::vector<Node> nodes_;
};

/// Per-node gradients produced by `backward`.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  /// Gradient of the output with respect to `v`. Parameters unreachable from
  /// the output have an all-zero gradient.
  const Tensor& of(Var v) const;
  bool has(Var v) const noexcept { return v.id < grads_.size() && !grads_[v.id].empty(); }

 private:
  std::vector<Tensor> grads_;
};

/// Reverse-mode accumulation from a scalar output.
Gradients backward(const Tape& tape, Var output);

namespace ops {

Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
/// x[B x n] + b[n] broadcast over rows.
Var add_row_bias(Tape& t, Var x, Var bias);
Var relu(Tape& t, Var x);
/// input [C x H x W] or [B x C x H x W]; kernels [O x C x k x k]; zero padding.
Var conv2d(Tape& t, Var input, Var kernels, std::size_t stride, std::size_t padding);
/// x[B x C x H x W] + b[C].
Var add_channel_bias(Tape& t, Var x, Var bias);
/// 2x2 max pool with stride 2; ties keep the first element in row-major order.
Var max_pool2(Tape& t, Var x);
/// [B x C x H x W] -> [B x C].
Var global_avg_pool(Tape& t, Var x);
/// Normalizes each row of a [B x d] matrix (or a [d] vector) to unit norm.
Var l2_normalize(Tape& t, Var x);
Var sum(Tape& t, Var x);
/// Row-wise log(sum_j mask_ij * exp(x_ij)), max-shifted. mask entries are 0 or 1.
Var masked_logsumexp_rows(Tape& t, Var x, std::shared_ptr<const Tensor> mask);
/// sum_i weights_i * x_i over all elements; weights are constant.
Var weighted_sum(Tape& t, Var x, std::shared_ptr<const Tensor> weights);
/// Constant sparse matrix times dense [cols x d] matrix.
Var sparse_matmul(Tape& t, std::shared_ptr<const SparseMatrix> s, Var x);
Var reshape(Tape& t, Var x, Shape shape);

}  // namespace ops

/// Degeneracy threshold for normalization.
inline constexpr double kNormEpsilon = 1e-12;

/// Plain-tensor helpers used outside of a tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding);
Tensor l2_normalize(const Tensor& x);

}  // namespace kgnn

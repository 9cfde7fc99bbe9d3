#include "kgnn/tape.hpp"

#include "kgnn/error.hpp"

namespace kgnn {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddRowBias: return "add_row_bias";
    case Op::Relu: return "relu";
    case Op::Conv2d: return "conv2d";
    case Op::AddChannelBias: return "add_channel_bias";
    case Op::MaxPool2: return "max_pool2";
    case Op::GlobalAvgPool: return "global_avg_pool";
    case Op::L2NormalizeRows: return "l2_normalize";
    case Op::Sum: return "sum";
    case Op::MaskedLogSumExpRows: return "masked_logsumexp_rows";
    case Op::WeightedSum: return "weighted_sum";
    case Op::SparseMatMul: return "sparse_matmul";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return record(std::move(n));
}

Var Tape::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return record(std::move(n));
}

const Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size())
    throw LookupError("node " + std::to_string(id) + " is not on this tape (size " +
                      std::to_string(nodes_.size()) + ")");
  return nodes_[id];
}

Var Tape::record(Node n) {
  for (NodeId in : n.inputs) {
    if (in >= nodes_.size()) throw LookupError("input node " + std::to_string(in) + " is not on this tape");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  if (!n.value.all_finite())
    throw NumericalError(std::string("non-finite value produced by ") + op_name(n.op));
  nodes_.push_back(std::move(n));
  return Var{static_cast<NodeId>(nodes_.size() - 1)};
}

const Tensor& Gradients::of(Var v) const {
  if (v.id >= grads_.size()) throw LookupError("no gradient slot for node " + std::to_string(v.id));
  if (grads_[v.id].empty())
    throw LookupError("node " + std::to_string(v.id) + " does not require a gradient");
  return grads_[v.id];
}

}  // namespace kgnn

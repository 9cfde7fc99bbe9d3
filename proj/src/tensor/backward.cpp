#include <cmath>

#include "kernels.hpp"
#include "kgnn/error.hpp"
#include "kgnn/tape.hpp"

namespace kgnn {
namespace {

Tensor& slot(std::vector<Tensor>& grads, const Tape& tape, NodeId id) {
  if (grads[id].empty()) grads[id] = Tensor::zeros(tape.node(id).value.shape());
  return grads[id];
}

void accumulate(std::vector<Tensor>& grads, const Tape& tape, NodeId id, const Tensor& g) {
  if (!tape.node(id).requires_grad) return;
  Tensor& dst = slot(grads, tape, id);
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
}

void propagate(const Tape& tape, const Node& n, const Tensor& g, std::vector<Tensor>& grads) {
  auto input = [&](std::size_t k) -> const Node& { return tape.node(n.inputs[k]); };
  auto wants = [&](std::size_t k) { return input(k).requires_grad; };

  switch (n.op) {
    case Op::Leaf:
      return;

    case Op::MatMul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
      if (wants(0)) kernels::gemm_nt_acc(g.ptr(), b.ptr(), slot(grads, tape, n.inputs[0]).ptr(), m, cols, k);
      if (wants(1)) kernels::gemm_tn_acc(a.ptr(), g.ptr(), slot(grads, tape, n.inputs[1]).ptr(), k, m, cols);
      return;
    }

    case Op::Transpose: {
      if (!wants(0)) return;
      const std::size_t r = n.value.dim(0), c = n.value.dim(1);
      Tensor& dst = slot(grads, tape, n.inputs[0]);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dst[j * r + i] += g[i * c + j];
      return;
    }

    case Op::Add:
      accumulate(grads, tape, n.inputs[0], g);
      accumulate(grads, tape, n.inputs[1], g);
      return;

    case Op::Sub: {
      accumulate(grads, tape, n.inputs[0], g);
      if (!wants(1)) return;
      Tensor& dst = slot(grads, tape, n.inputs[1]);
      for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] -= g[i];
      return;
    }

    case Op::Mul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      if (wants(0)) {
        Tensor& dst = slot(grads, tape, n.inputs[0]);
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i] * b[i];
      }
      if (wants(1)) {
        Tensor& dst = slot(grads, tape, n.inputs[1]);
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i] * a[i];
      }
      return;
    }

    case Op::Scale: {
      if (!wants(0)) return;
      Tensor& dst = slot(grads, tape, n.inputs[0]);
      for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += n.factor * g[i];
      return;
    }

    case Op::AddRowBias: {
      accumulate(grads, tape, n.inputs[0], g);
      if (!wants(1)) return;
      Tensor& dst = slot(grads, tape, n.inputs[1]);
      const std::size_t cols = n.value.dim(1);
      for (std::size_t r = 0; r < n.value.dim(0); ++r)
        for (std::size_t j = 0; j < cols; ++j) dst[j] += g[r * cols + j];
      return;
    }

    case Op::Relu: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& dst = slot(grads, tape, n.inputs[0]);
      for (std::size_t i = 0; i < dst.numel(); ++i)
        if (x[i] > 0.0) dst[i] += g[i];
      return;
    }

    case Op::Conv2d: {
      const Tensor& x = input(0).value;
      const Tensor& w = input(1).value;
      const bool batched = x.rank() == 4;
      const std::size_t batch = batched ? x.dim(0) : 1;
      const std::size_t off = batched ? 1 : 0;
      kernels::ConvGeometry geo{};
      geo.channels_in = x.dim(off);
      geo.height = x.dim(off + 1);
      geo.width = x.dim(off + 2);
      geo.channels_out = w.dim(0);
      geo.kernel = w.dim(2);
      geo.stride = n.stride;
      geo.padding = n.padding;
      geo.out_height = n.value.dim(off + 1);
      geo.out_width = n.value.dim(off + 2);
      const std::size_t in_stride = geo.channels_in * geo.height * geo.width;
      const std::size_t out_stride = geo.channels_out * geo.out_height * geo.out_width;
      std::vector<double> cols(kernels::patch_size(geo) * kernels::out_plane(geo));
      if (wants(0)) {
        Tensor& dx = slot(grads, tape, n.inputs[0]);
        for (std::size_t b = 0; b < batch; ++b)
          kernels::conv_backward_input(geo, g.ptr() + b * out_stride, w.ptr(), dx.ptr() + b * in_stride,
                                       cols.data());
      }
      if (wants(1)) {
        Tensor& dw = slot(grads, tape, n.inputs[1]);
        std::vector<double> cols_t(cols.size());
        for (std::size_t b = 0; b < batch; ++b)
          kernels::conv_backward_weight(geo, g.ptr() + b * out_stride, x.ptr() + b * in_stride, dw.ptr(),
                                        cols.data(), cols_t.data());
      }
      return;
    }

    case Op::AddChannelBias: {
      accumulate(grads, tape, n.inputs[0], g);
      if (!wants(1)) return;
      Tensor& db = slot(grads, tape, n.inputs[1]);
      const std::size_t ch = n.value.dim(1);
      const std::size_t plane = n.value.dim(2) * n.value.dim(3);
      for (std::size_t b = 0; b < n.value.dim(0); ++b)
        for (std::size_t c = 0; c < ch; ++c) {
          const double* p = g.ptr() + (b * ch + c) * plane;
          double s = 0;
          for (std::size_t i = 0; i < plane; ++i) s += p[i];
          db[c] += s;
        }
      return;
    }

    case Op::MaxPool2: {
      if (!wants(0)) return;
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (std::size_t i = 0; i < g.numel(); ++i) dx[n.argmax[i]] += g[i];
      return;
    }

    case Op::GlobalAvgPool: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      const std::size_t plane = x.dim(2) * x.dim(3);
      const double inv = 1.0 / static_cast<double>(plane);
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (std::size_t p = 0; p < g.numel(); ++p) {
        double* dst = dx.ptr() + p * plane;
        const double v = g[p] * inv;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
      }
      return;
    }

    case Op::L2NormalizeRows: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      const Tensor& y = n.value;
      const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
      const std::size_t d = x.numel() / rows;
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.ptr() + r * d;
        const double* yr = y.ptr() + r * d;
        const double* gr = g.ptr() + r * d;
        double ss = 0, dot = 0;
        for (std::size_t j = 0; j < d; ++j) {
          ss += xr[j] * xr[j];
          dot += yr[j] * gr[j];
        }
        const double inv_norm = 1.0 / std::sqrt(ss);
        double* dr = dx.ptr() + r * d;
        for (std::size_t j = 0; j < d; ++j) dr[j] += (gr[j] - yr[j] * dot) * inv_norm;
      }
      return;
    }

    case Op::Sum: {
      if (!wants(0)) return;
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (double& v : dx.data()) v += g[0];
      return;
    }

    case Op::MaskedLogSumExpRows: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      const Tensor& mask = *n.aux;
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (std::size_t r = 0; r < rows; ++r) {
        const double lse = n.value[r];
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t i = r * cols + j;
          if (mask[i] != 0.0) dx[i] += g[r] * std::exp(x[i] - lse);
        }
      }
      return;
    }

    case Op::WeightedSum: {
      if (!wants(0)) return;
      const Tensor& w = *n.aux;
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += g[0] * w[i];
      return;
    }

    case Op::SparseMatMul: {
      if (!wants(0)) return;
      const SparseMatrix& s = *n.sparse;
      const std::size_t d = n.value.dim(1);
      Tensor& dx = slot(grads, tape, n.inputs[0]);
      for (std::size_t r = 0; r < s.rows; ++r) {
        const double* gr = g.ptr() + r * d;
        for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
          const double v = s.values[e];
          double* dr = dx.ptr() + s.col_idx[e] * d;
          for (std::size_t j = 0; j < d; ++j) dr[j] += v * gr[j];
        }
      }
      return;
    }

    case Op::Reshape:
      accumulate(grads, tape, n.inputs[0], g);
      return;
  }
}

}  // namespace

Gradients backward(const Tape& tape, Var output) {
  const Node& out = tape.node(output.id);
  if (out.value.numel() != 1)
    throw ContractError("backward: output must be scalar, got shape " + shape_to_string(out.value.shape()));

  std::vector<Tensor> grads(tape.size());
  if (out.requires_grad) {
    grads[output.id] = Tensor::full(out.value.shape(), 1.0);
    for (NodeId id = output.id + 1; id-- > 0;) {
      const Node& n = tape.node(id);
      if (grads[id].empty() || n.op == Op::Leaf) continue;
      propagate(tape, n, grads[id], grads);
      if (id != output.id) grads[id] = Tensor{};
    }
  }
  // Unreachable parameters receive explicit zeros.
  for (NodeId id = 0; id < tape.size(); ++id) {
    const Node& n = tape.node(id);
    if (n.op == Op::Leaf && n.requires_grad && grads[id].empty()) grads[id] = Tensor::zeros(n.value.shape());
  }
  return Gradients(std::move(grads));
}

}  // namespace kgnn

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "kgnn/error.hpp"
#include "kgnn/tape.hpp"

namespace kgnn {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

Node make_node(Op op, std::initializer_list<Var> inputs, Tensor value) {
  Node n;
  n.op = op;
  for (Var v : inputs) n.inputs.push_back(v.id);
  n.value = std::move(value);
  return n;
}

kernels::ConvGeometry conv_geometry(const Shape& in, const Shape& kernels, std::size_t stride,
                                    std::size_t padding) {
  // in is [B x C x H x W]
  if (kernels.size() != 4 || kernels[2] != kernels[3])
    throw DimensionError("conv2d: kernels must be [O x C x k x k], got " + shape_to_string(kernels));
  if (kernels[1] != in[1])
    throw DimensionError("conv2d: input channels " + shape_to_string(in) + " do not match kernels " +
                         shape_to_string(kernels));
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t k = kernels[2];
  if (k > in[2] + 2 * padding || k > in[3] + 2 * padding)
    throw DimensionError("conv2d: kernel " + shape_to_string(kernels) + " larger than padded input " +
                         shape_to_string(in));
  kernels::ConvGeometry g{};
  g.channels_in = in[1];
  g.height = in[2];
  g.width = in[3];
  g.channels_out = kernels[0];
  g.kernel = k;
  g.stride = stride;
  g.padding = padding;
  g.out_height = (in[2] + 2 * padding - k) / stride + 1;
  g.out_width = (in[3] + 2 * padding - k) / stride + 1;
  return g;
}

Shape as_batched(const Shape& s) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return s;
  throw DimensionError("conv2d: input must be [C x H x W] or [B x C x H x W], got " + shape_to_string(s));
}

Tensor normalize_rows(const Tensor& x) {
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t d = x.numel() / rows;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * d;
    double ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
    const double norm = std::sqrt(ss);
    if (!(norm > kNormEpsilon))
      throw DegenerateVectorError("cannot normalize row " + std::to_string(r) + " with norm " +
                                  std::to_string(norm));
    double* yr = y.ptr() + r * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] / norm;
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dimensions disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm_acc(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  const Shape in = as_batched(input.shape());
  const auto g = conv_geometry(in, kernels.shape(), stride, padding);
  const std::size_t batch = in[0];
  Shape out_shape = {batch, g.channels_out, g.out_height, g.out_width};
  Tensor out(out_shape);
  const std::size_t in_stride = g.channels_in * g.height * g.width;
  const std::size_t out_stride = g.channels_out * g.out_height * g.out_width;
  std::vector<double> cols(kernels::patch_size(g) * kernels::out_plane(g));
  for (std::size_t b = 0; b < batch; ++b)
    kernels::conv_forward(g, input.ptr() + b * in_stride, kernels.ptr(), out.ptr() + b * out_stride, cols.data());
  if (input.rank() == 3) return out.reshaped({g.channels_out, g.out_height, g.out_width});
  return out;
}

Tensor l2_normalize(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2)
    throw DimensionError("l2_normalize: expected [d] or [B x d], got " + shape_to_string(x.shape()));
  return normalize_rows(x);
}

namespace ops {

Var matmul(Tape& t, Var a, Var b) {
  return t.record(make_node(Op::MatMul, {a, b}, kgnn::matmul(t.value(a), t.value(b))));
}

Var transpose(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  return t.record(make_node(Op::Transpose, {a}, std::move(y)));
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "add");
  Tensor z = x;
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] += y[i];
  return t.record(make_node(Op::Add, {a, b}, std::move(z)));
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "sub");
  Tensor z = x;
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] -= y[i];
  return t.record(make_node(Op::Sub, {a, b}, std::move(z)));
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "mul");
  Tensor z = x;
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] *= y[i];
  return t.record(make_node(Op::Mul, {a, b}, std::move(z)));
}

Var scale(Tape& t, Var a, double factor) {
  Tensor z = t.value(a);
  for (double& v : z.data()) v *= factor;
  Node n = make_node(Op::Scale, {a}, std::move(z));
  n.factor = factor;
  return t.record(std::move(n));
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  require_rank(xv, 2, "add_row_bias");
  if (bv.numel() != xv.dim(1))
    throw DimensionError("add_row_bias: bias " + shape_to_string(bv.shape()) + " does not match " +
                         shape_to_string(xv.shape()));
  Tensor z = xv;
  const std::size_t n = xv.dim(1);
  for (std::size_t r = 0; r < xv.dim(0); ++r)
    for (std::size_t j = 0; j < n; ++j) z[r * n + j] += bv[j];
  return t.record(make_node(Op::AddRowBias, {x, bias}, std::move(z)));
}

Var relu(Tape& t, Var x) {
  Tensor z = t.value(x);
  for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  return t.record(make_node(Op::Relu, {x}, std::move(z)));
}

Var conv2d(Tape& t, Var input, Var kernels, std::size_t stride, std::size_t padding) {
  Node n = make_node(Op::Conv2d, {input, kernels},
                     kgnn::conv2d(t.value(input), t.value(kernels), stride, padding));
  n.stride = stride;
  n.padding = padding;
  return t.record(std::move(n));
}

Var add_channel_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  require_rank(xv, 4, "add_channel_bias");
  if (bv.numel() != xv.dim(1))
    throw DimensionError("add_channel_bias: bias " + shape_to_string(bv.shape()) + " does not match " +
                         shape_to_string(xv.shape()));
  Tensor z = xv;
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  for (std::size_t b = 0; b < xv.dim(0); ++b)
    for (std::size_t c = 0; c < xv.dim(1); ++c) {
      double* p = z.ptr() + (b * xv.dim(1) + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += bv[c];
    }
  return t.record(make_node(Op::AddChannelBias, {x, bias}, std::move(z)));
}

Var max_pool2(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_rank(xv, 4, "max_pool2");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h % 2 || w % 2) throw DimensionError("max_pool2: spatial dims must be even, got " + shape_to_string(xv.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({batch, ch, oh, ow});
  Node n;
  n.argmax.resize(y.numel());
  for (std::size_t p = 0; p < batch * ch; ++p) {
    const std::size_t in_base = p * h * w;
    const std::size_t out_base = p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = in_base + (2 * oy) * w + 2 * ox;
        const std::size_t cands[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t c : cands)
          if (xv[c] > xv[best]) best = c;
        y[out_base + oy * ow + ox] = xv[best];
        n.argmax[out_base + oy * ow + ox] = static_cast<std::uint32_t>(best);
      }
  }
  n.op = Op::MaxPool2;
  n.inputs = {x.id};
  n.value = std::move(y);
  return t.record(std::move(n));
}

Var global_avg_pool(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_rank(xv, 4, "global_avg_pool");
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  Tensor y({xv.dim(0), xv.dim(1)});
  for (std::size_t p = 0; p < y.numel(); ++p) {
    const double* src = xv.ptr() + p * plane;
    double s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    y[p] = s / static_cast<double>(plane);
  }
  return t.record(make_node(Op::GlobalAvgPool, {x}, std::move(y)));
}

Var l2_normalize(Tape& t, Var x) {
  return t.record(make_node(Op::L2NormalizeRows, {x}, kgnn::l2_normalize(t.value(x))));
}

Var sum(Tape& t, Var x) {
  double s = 0;
  for (double v : t.value(x).data()) s += v;
  return t.record(make_node(Op::Sum, {x}, Tensor::scalar(s)));
}

Var masked_logsumexp_rows(Tape& t, Var x, std::shared_ptr<const Tensor> mask) {
  const Tensor& xv = t.value(x);
  require_rank(xv, 2, "masked_logsumexp_rows");
  require_same_shape(xv, *mask, "masked_logsumexp_rows");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.ptr() + r * cols;
    const double* mr = mask->ptr() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (mr[j] != 0.0) mx = std::max(mx, xr[j]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw ContractError("masked_logsumexp_rows: row " + std::to_string(r) + " has an empty mask");
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j)
      if (mr[j] != 0.0) s += std::exp(xr[j] - mx);
    y[r] = mx + std::log(s);
  }
  Node n = make_node(Op::MaskedLogSumExpRows, {x}, std::move(y));
  n.aux = std::move(mask);
  return t.record(std::move(n));
}

Var weighted_sum(Tape& t, Var x, std::shared_ptr<const Tensor> weights) {
  const Tensor& xv = t.value(x);
  require_same_shape(xv, *weights, "weighted_sum");
  double s = 0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += (*weights)[i] * xv[i];
  Node n = make_node(Op::WeightedSum, {x}, Tensor::scalar(s));
  n.aux = std::move(weights);
  return t.record(std::move(n));
}

Var sparse_matmul(Tape& t, std::shared_ptr<const SparseMatrix> s, Var x) {
  const Tensor& xv = t.value(x);
  require_rank(xv, 2, "sparse_matmul");
  if (xv.dim(0) != s->cols)
    throw DimensionError("sparse_matmul: sparse [" + std::to_string(s->rows) + "x" + std::to_string(s->cols) +
                         "] times " + shape_to_string(xv.shape()));
  const std::size_t d = xv.dim(1);
  Tensor y({s->rows, d});
  for (std::size_t r = 0; r < s->rows; ++r) {
    double* yr = y.ptr() + r * d;
    for (std::size_t e = s->row_ptr[r]; e < s->row_ptr[r + 1]; ++e) {
      const double v = s->values[e];
      const double* xr = xv.ptr() + s->col_idx[e] * d;
      for (std::size_t j = 0; j < d; ++j) yr[j] += v * xr[j];
    }
  }
  Node n = make_node(Op::SparseMatMul, {x}, std::move(y));
  n.sparse = std::move(s);
  return t.record(std::move(n));
}

Var reshape(Tape& t, Var x, Shape shape) {
  return t.record(make_node(Op::Reshape, {x}, t.value(x).reshaped(std::move(shape))));
}

}  // namespace ops
}  // namespace kgnn

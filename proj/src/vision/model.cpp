#include <cmath>

#include "kgnn/error.hpp"
#include "kgnn/vision.hpp"

namespace kgnn::vision {

std::size_t EncoderConfig::embedding_dim() const {
  if (blocks.empty()) throw ConfigError("encoder needs at least one conv block");
  return blocks.back();
}

void EncoderConfig::validate() const {
  if (blocks.empty()) throw ConfigError("encoder needs at least one conv block");
  if (blocks.size() > 16) throw ConfigError("too many conv blocks");
  for (std::size_t b : blocks)
    if (b == 0) throw ConfigError("conv block channel counts must be positive");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("image dimensions must be positive");
  const std::size_t div = std::size_t{1} << blocks.size();
  if (height % div || width % div)
    throw ConfigError("image size " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by " +
                      std::to_string(div) + " for " + std::to_string(blocks.size()) + " blocks");
}

Encoder Encoder::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  Encoder e;
  e.config = config;
  std::size_t in = config.channels;
  for (std::size_t out : config.blocks) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
    e.kernels.push_back(Tensor::uniform({out, in, 3, 3}, -bound, bound, rng));
    e.biases.push_back(Tensor::zeros({out}));
    in = out;
  }
  return e;
}

std::vector<Tensor*> Encoder::parameters() {
  std::vector<Tensor*> p;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    p.push_back(&kernels[i]);
    p.push_back(&biases[i]);
  }
  return p;
}

ProjectionHead ProjectionHead::init(std::size_t d_e, std::size_t d_p, Rng& rng) {
  if (d_e == 0 || d_p == 0) throw ConfigError("projection dims must be positive");
  ProjectionHead h;
  const double b1 = std::sqrt(6.0 / static_cast<double>(d_e));
  h.w1 = Tensor::uniform({d_e, d_e}, -b1, b1, rng);
  h.b1 = Tensor::zeros({d_e});
  h.w2 = Tensor::glorot({d_e, d_p}, d_e, d_p, rng);
  h.b2 = Tensor::uniform({d_p}, -0.01, 0.01, rng);
  return h;
}

std::vector<Tensor*> ProjectionHead::parameters() { return {&w1, &b1, &w2, &b2}; }

LinearProbe LinearProbe::init(std::size_t d_e, std::size_t n_classes, Rng& rng) {
  if (d_e == 0 || n_classes == 0) throw ConfigError("probe dims must be positive");
  LinearProbe p;
  p.weight = Tensor::glorot({d_e, n_classes}, d_e, n_classes, rng);
  p.bias = Tensor::zeros({n_classes});
  return p;
}

std::vector<Tensor*> LinearProbe::parameters() { return {&weight, &bias}; }

std::vector<Var> bind_parameters(Tape& t, const std::vector<Tensor*>& params, bool trainable) {
  std::vector<Var> v;
  v.reserve(params.size());
  for (Tensor* p : params) v.push_back(trainable ? t.parameter(*p) : t.constant(*p));
  return v;
}

Var encode(Tape& t, const EncoderConfig& config, const std::vector<Var>& vars, Var images) {
  const Tensor& x = t.value(images);
  const Shape want = config.image_shape();
  if (x.rank() != 4 || x.dim(1) != want[0] || x.dim(2) != want[1] || x.dim(3) != want[2])
    throw DimensionError("images " + shape_to_string(x.shape()) + " do not match encoder input [Bx" +
                         std::to_string(want[0]) + "x" + std::to_string(want[1]) + "x" + std::to_string(want[2]) + "]");
  if (vars.size() != 2 * config.blocks.size())
    throw DimensionError("encoder expects " + std::to_string(2 * config.blocks.size()) + " parameters");
  Var h = images;
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    h = ops::conv2d(t, h, vars[2 * b], 1, 1);
    h = ops::relu(t, ops::add_channel_bias(t, h, vars[2 * b + 1]));
    h = ops::max_pool2(t, h);
  }
  return ops::global_avg_pool(t, h);
}

Var project(Tape& t, const std::vector<Var>& vars, Var h) {
  if (vars.size() != 4) throw DimensionError("projection head expects 4 parameters");
  const Var hidden = ops::relu(t, ops::add_row_bias(t, ops::matmul(t, h, vars[0]), vars[1]));
  return ops::l2_normalize(t, ops::add_row_bias(t, ops::matmul(t, hidden, vars[2]), vars[3]));
}

Var probe_logits(Tape& t, const std::vector<Var>& vars, Var h) {
  if (vars.size() != 2) throw DimensionError("linear probe expects 2 parameters");
  return ops::add_row_bias(t, ops::matmul(t, h, vars[0]), vars[1]);
}

Tensor encode(const Encoder& e, const Tensor& images) {
  Tape t;
  auto params = const_cast<Encoder&>(e).parameters();
  const auto vars = bind_parameters(t, params, false);
  return t.value(encode(t, e.config, vars, t.constant(images)));
}

Tensor project(const ProjectionHead& p, const Tensor& h) {
  Tape t;
  const auto vars = bind_parameters(t, const_cast<ProjectionHead&>(p).parameters(), false);
  return t.value(project(t, vars, t.constant(h)));
}

Tensor probe_logits(const LinearProbe& p, const Tensor& h) {
  Tape t;
  const auto vars = bind_parameters(t, const_cast<LinearProbe&>(p).parameters(), false);
  return t.value(probe_logits(t, vars, t.constant(h)));
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("logits must be a matrix, got " + shape_to_string(logits.shape()));
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    out.push_back(best);
  }
  return out;
}

}  // namespace kgnn::vision

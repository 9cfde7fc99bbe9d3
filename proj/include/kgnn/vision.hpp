#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgnn/rng.hpp"
#include "kgnn/serialize.hpp"
#include "kgnn/tape.hpp"

namespace kgnn::vision {

struct EncoderConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::vector<std::size_t> blocks{16, 32, 64};

  /// d_E, the channel count of the last block.
  std::size_t embedding_dim() const;
  /// Throws ConfigError when blocks are empty or zero, or H/W are not
  /// divisible by 2^blocks.
  void validate() const;
  Shape image_shape() const { return {channels, height, width}; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Blocks of 3x3 conv (stride 1, pad 1) + bias, ReLU, 2x2 max-pool, then a
/// global average pool.
struct Encoder {
  EncoderConfig config;
  std::vector<Tensor> kernels;  // [O x C x 3 x 3]
  std::vector<Tensor> biases;   // [O]

  static Encoder init(const EncoderConfig& config, Rng& rng);
  std::vector<Tensor*> parameters();
  friend bool operator==(const Encoder&, const Encoder&) = default;
};

/// z = normalize(W2 ReLU(W1 h + b1) + b2)
struct ProjectionHead {
  Tensor w1, b1;  // [d_E x d_E], [d_E]
  Tensor w2, b2;  // [d_E x d_P], [d_P]

  static ProjectionHead init(std::size_t d_e, std::size_t d_p, Rng& rng);
  std::size_t input_dim() const { return w1.dim(0); }
  std::size_t output_dim() const { return w2.dim(1); }
  std::vector<Tensor*> parameters();
  friend bool operator==(const ProjectionHead&, const ProjectionHead&) = default;
};

/// logits = h W + b
struct LinearProbe {
  Tensor weight, bias;  // [d_E x n_classes], [n_classes]

  static LinearProbe init(std::size_t d_e, std::size_t n_classes, Rng& rng);
  std::size_t input_dim() const { return weight.dim(0); }
  std::size_t class_count() const { return weight.dim(1); }
  std::vector<Tensor*> parameters();
  friend bool operator==(const LinearProbe&, const LinearProbe&) = default;
};

/// Binds a parameter list onto a tape, as parameters or constants.
std::vector<Var> bind_parameters(Tape& t, const std::vector<Tensor*>& params, bool trainable);

/// Tape forms. `vars` are the model's parameters() bound in order.
Var encode(Tape& t, const EncoderConfig& config, const std::vector<Var>& vars, Var images);
Var project(Tape& t, const std::vector<Var>& vars, Var h);
Var probe_logits(Tape& t, const std::vector<Var>& vars, Var h);

/// Plain forms. Images are [B x C x H x W] with values in [0, 1].
Tensor encode(const Encoder& e, const Tensor& images);
Tensor project(const ProjectionHead& p, const Tensor& h);
Tensor probe_logits(const LinearProbe& p, const Tensor& h);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

inline constexpr std::string_view kCheckpointMagic = "KGNC";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::optional<Encoder> encoder;
  std::optional<ProjectionHead> head;
  std::optional<LinearProbe> probe;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// "KGNC", u16 version, u32 metadata length + `key=value\n` lines, then a
/// tensor chunk. Encoder geometry is stored in metadata under `encoder.*`.
Bytes save_checkpoint(const Checkpoint& c);
/// Throws FormatError on bad magic, version, truncation or inconsistent tensors.
Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace kgnn::vision

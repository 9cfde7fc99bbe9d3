#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgnn/tensor.hpp"

namespace kgnn {

using Bytes = std::vector<std::uint8_t>;

/// Little-endian binary writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::string_view bytes);
  void raw(std::span<const std::uint8_t> bytes);
  /// u16 length prefix + UTF-8 bytes.
  void str16(std::string_view s);

  const Bytes& bytes() const noexcept { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

/// Little-endian reader. Every read past the end throws FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in, std::string context = "input")
      : in_(in), context_(std::move(context)) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  double f64();
  std::string raw(std::size_t n);
  std::string str16();
  void expect_magic(std::string_view magic);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == in_.size(); }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n);

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::string context_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline constexpr std::string_view kTensorMagic = "KGNT";
inline constexpr std::uint16_t kTensorFormatVersion = 1;

/// Tensor chunk: "KGNT", u16 version, then per tensor: u16 name length, name,
/// u8 rank, u32 dims, f64 data. Tensors run to the end of the buffer.
void write_tensor_chunk(ByteWriter& w, std::span<const NamedTensor> tensors);
Bytes encode_tensors(std::span<const NamedTensor> tensors);
/// Reads tensors until the end of the reader.
std::vector<NamedTensor> read_tensor_chunk(ByteReader& r);
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);

Bytes read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Hex FNV-1a 64 digest of raw bytes; used as a content hash in metadata.
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string content_hash(std::string_view text);

}  // namespace kgnn

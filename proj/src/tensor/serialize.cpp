#include "kgnn/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

namespace kgnn {

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void ByteWriter::raw(std::string_view bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

void ByteWriter::raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

void ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xffff) throw FormatError("string too long for u16 length prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

void ByteReader::fail(const std::string& what) const {
  throw FormatError(context_ + ": " + what + " at byte " + std::to_string(pos_));
}

void ByteReader::need(std::size_t n) {
  if (in_.size() - pos_ < n) fail("truncated, needed " + std::to_string(n) + " more bytes");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return in_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  const std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return std::bit_cast<double>(v);
}

std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::str16() { return raw(u16()); }

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || raw(magic.size()) != magic) {
    pos_ = 0;
    fail("bad magic, expected \"" + std::string(magic) + "\"");
  }
}

void write_tensor_chunk(ByteWriter& w, std::span<const NamedTensor> tensors) {
  w.raw(kTensorMagic);
  w.u16(kTensorFormatVersion);
  for (const auto& nt : tensors) {
    w.str16(nt.name);
    const Shape& s = nt.tensor.shape();
    if (s.size() > 255) throw FormatError("tensor rank too large: " + nt.name);
    w.u8(static_cast<std::uint8_t>(s.size()));
    for (std::size_t d : s) w.u32(static_cast<std::uint32_t>(d));
    for (double v : nt.tensor.data()) w.f64(v);
  }
}

Bytes encode_tensors(std::span<const NamedTensor> tensors) {
  ByteWriter w;
  write_tensor_chunk(w, tensors);
  return w.take();
}

std::vector<NamedTensor> read_tensor_chunk(ByteReader& r) {
  r.expect_magic(kTensorMagic);
  const std::uint16_t version = r.u16();
  if (version != kTensorFormatVersion) r.fail("unsupported tensor format version " + std::to_string(version));
  std::vector<NamedTensor> out;
  while (!r.at_end()) {
    NamedTensor nt;
    nt.name = r.str16();
    const std::uint8_t rank = r.u8();
    if (rank == 0) r.fail("tensor '" + nt.name + "' has rank 0");
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) r.fail("tensor '" + nt.name + "' has a zero dimension");
      count *= d;
      if (count > r.remaining() / 8 + 1) r.fail("tensor '" + nt.name + "' larger than remaining data");
    }
    if (r.remaining() < count * 8) r.fail("truncated data for tensor '" + nt.name + "'");
    std::vector<double> data(count);
    for (double& v : data) v = r.f64();
    nt.tensor = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "tensor chunk");
  return read_tensor_chunk(r);
}

Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  const Bytes b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string content_hash(std::string_view text) {
  return content_hash({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace kgnn

#include <limits>

#include "kgnn/datasets.hpp"
#include "kgnn/error.hpp"

namespace kgnn::data {

Bytes encode_dataset(const LabeledDataset& ds) {
  ds.validate();
  if (ds.label_names.size() > std::numeric_limits<std::uint16_t>::max())
    throw ContractError("too many label names for the dataset format");
  ByteWriter w;
  w.raw(kDatasetMagic);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u16(static_cast<std::uint16_t>(ds.label_names.size()));
  for (const std::string& n : ds.label_names) w.str16(n);
  w.str16(ds.domain_tag);
  for (float v : ds.pixels) w.f32(v);
  for (std::size_t l : ds.labels) w.u16(static_cast<std::uint16_t>(l));
  return w.take();
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "dataset");
  r.expect_magic(kDatasetMagic);
  LabeledDataset ds;
  const std::uint32_t n = r.u32();
  const std::uint16_t names = r.u16();
  for (std::uint16_t i = 0; i < names; ++i) ds.label_names.push_back(r.str16());
  ds.domain_tag = r.str16();
  const std::uint64_t need = static_cast<std::uint64_t>(n) * (kImagePixels * 4 + 2);
  if (r.remaining() != need)
    r.fail("expected " + std::to_string(need) + " bytes of image data, found " + std::to_string(r.remaining()));
  ds.pixels.resize(static_cast<std::size_t>(n) * kImagePixels);
  for (float& v : ds.pixels) {
    v = r.f32();
    if (!(v >= 0.0f && v <= 1.0f)) r.fail("pixel value outside [0, 1]");
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint16_t l = r.u16();
    if (l >= names) r.fail("label " + std::to_string(l) + " out of range");
    ds.labels.push_back(l);
  }
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(ds));
}

LabeledDataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file_bytes(path)); }

void save_manifest(const LabeledDataset& ds, const std::filesystem::path& dir) {
  save_dataset(ds, dir / "data.kgnd");
  std::string text;
  for (const std::string& n : ds.label_names) text += n + "\n";
  write_text_file(dir / "labels.txt", text);
}

LabeledDataset load_manifest(const std::filesystem::path& dir) {
  LabeledDataset ds = load_dataset(dir / "data.kgnd");
  std::vector<std::string> names;
  const std::string text = read_text_file(dir / "labels.txt");
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
    start = end + 1;
  }
  if (names != ds.label_names) throw FormatError("labels.txt does not match the label names in data.kgnd");
  return ds;
}

}  // namespace kgnn::data

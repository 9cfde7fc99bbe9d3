#include <charconv>

#include "kgnn/error.hpp"
#include "kgnn/vision.hpp"

namespace kgnn::vision {
namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::size_t parse_size(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw FormatError("checkpoint metadata " + key + "='" + s + "' is not a size");
  return v;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    out.push_back(parse_size(s.substr(start, end - start), key));
    start = end + 1;
  }
  return out;
}

const std::string& require(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint metadata lacks " + key);
  return it->second;
}

Tensor take(std::map<std::string, Tensor>& tensors, const std::string& name, const Shape& shape) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint lacks tensor " + name);
  if (it->second.shape() != shape)
    throw FormatError("checkpoint tensor " + name + " has shape " + shape_to_string(it->second.shape()) +
                      ", expected " + shape_to_string(shape));
  Tensor t = std::move(it->second);
  tensors.erase(it);
  return t;
}

bool has_prefix(const std::map<std::string, Tensor>& tensors, std::string_view prefix) {
  auto it = tensors.lower_bound(std::string(prefix));
  return it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

Bytes save_checkpoint(const Checkpoint& c) {
  std::map<std::string, std::string> meta = c.metadata;
  for (const auto& [k, _] : meta)
    if (k.rfind("encoder.", 0) == 0) throw ContractError("metadata key " + k + " is reserved");
  std::vector<NamedTensor> tensors;
  if (c.encoder) {
    const Encoder& e = *c.encoder;
    meta["encoder.height"] = std::to_string(e.config.height);
    meta["encoder.width"] = std::to_string(e.config.width);
    meta["encoder.channels"] = std::to_string(e.config.channels);
    meta["encoder.blocks"] = join_sizes(e.config.blocks);
    for (std::size_t i = 0; i < e.kernels.size(); ++i) {
      tensors.push_back({"encoder.conv" + std::to_string(i) + ".weight", e.kernels[i]});
      tensors.push_back({"encoder.conv" + std::to_string(i) + ".bias", e.biases[i]});
    }
  }
  if (c.head) {
    tensors.push_back({"head.w1", c.head->w1});
    tensors.push_back({"head.b1", c.head->b1});
    tensors.push_back({"head.w2", c.head->w2});
    tensors.push_back({"head.b2", c.head->b2});
  }
  if (c.probe) {
    tensors.push_back({"probe.weight", c.probe->weight});
    tensors.push_back({"probe.bias", c.probe->bias});
  }

  std::string text;
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ContractError("metadata entry '" + k + "' cannot be encoded");
    text += k + "=" + v + "\n";
  }
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  write_tensor_chunk(w, tensors);
  return w.take();
}

Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  if (const auto v = r.u16(); v != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(v));
  const std::string text = r.raw(r.u32());

  Checkpoint c;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string::npos) throw FormatError("checkpoint metadata is not newline-terminated");
    const std::string line = text.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw FormatError("bad checkpoint metadata line '" + line + "'");
    if (!c.metadata.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
      throw FormatError("duplicate checkpoint metadata key " + line.substr(0, eq));
    start = end + 1;
  }

  std::map<std::string, Tensor> tensors;
  for (NamedTensor& nt : read_tensor_chunk(r))
    if (!tensors.emplace(nt.name, std::move(nt.tensor)).second) throw FormatError("duplicate tensor " + nt.name);

  if (c.metadata.count("encoder.blocks")) {
    EncoderConfig cfg;
    cfg.height = parse_size(require(c.metadata, "encoder.height"), "encoder.height");
    cfg.width = parse_size(require(c.metadata, "encoder.width"), "encoder.width");
    cfg.channels = parse_size(require(c.metadata, "encoder.channels"), "encoder.channels");
    cfg.blocks = parse_sizes(require(c.metadata, "encoder.blocks"), "encoder.blocks");
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint encoder config: ") + e.what());
    }
    Encoder e;
    e.config = cfg;
    std::size_t in = cfg.channels;
    for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
      const std::string base = "encoder.conv" + std::to_string(i);
      e.kernels.push_back(take(tensors, base + ".weight", {cfg.blocks[i], in, 3, 3}));
      e.biases.push_back(take(tensors, base + ".bias", {cfg.blocks[i]}));
      in = cfg.blocks[i];
    }
    c.encoder = std::move(e);
    for (auto it = c.metadata.begin(); it != c.metadata.end();)
      it = it->first.rfind("encoder.", 0) == 0 ? c.metadata.erase(it) : std::next(it);
  }
  if (has_prefix(tensors, "head.")) {
    auto it = tensors.find("head.w2");
    if (it == tensors.end() || it->second.rank() != 2) throw FormatError("checkpoint lacks tensor head.w2");
    const std::size_t d_e = it->second.dim(0), d_p = it->second.dim(1);
    ProjectionHead h;
    h.w1 = take(tensors, "head.w1", {d_e, d_e});
    h.b1 = take(tensors, "head.b1", {d_e});
    h.w2 = take(tensors, "head.w2", {d_e, d_p});
    h.b2 = take(tensors, "head.b2", {d_p});
    c.head = std::move(h);
  }
  if (has_prefix(tensors, "probe.")) {
    auto it = tensors.find("probe.weight");
    if (it == tensors.end() || it->second.rank() != 2) throw FormatError("checkpoint lacks tensor probe.weight");
    const std::size_t d_e = it->second.dim(0), n = it->second.dim(1);
    LinearProbe p;
    p.weight = take(tensors, "probe.weight", {d_e, n});
    p.bias = take(tensors, "probe.bias", {n});
    c.probe = std::move(p);
  }
  if (!tensors.empty()) throw FormatError("checkpoint has unexpected tensor " + tensors.begin()->first);
  return c;
}

}  // namespace kgnn::vision

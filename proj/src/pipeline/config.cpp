#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "kgnn/error.hpp"
#include "kgnn/pipeline.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::pipeline {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T>
Field size_field(T PipelineConfig::*m) {
  return {[m](PipelineConfig& c, const std::string& v) { c.*m = static_cast<T>(to_u64(v)); },
          [m](const PipelineConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(double PipelineConfig::*m) {
  return {[m](PipelineConfig& c, const std::string& v) { c.*m = to_double(v); },
          [m](const PipelineConfig& c) { return fmt(c.*m); }};
}

Field string_field(std::string PipelineConfig::*m) {
  return {[m](PipelineConfig& c, const std::string& v) { c.*m = v; }, [m](const PipelineConfig& c) { return c.*m; }};
}

Field bool_field(bool PipelineConfig::*m) {
  return {[m](PipelineConfig& c, const std::string& v) { c.*m = to_bool(v); },
          [m](const PipelineConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"method", {[](PipelineConfig& c, const std::string& v) { c.method = parse_method(v); },
                  [](const PipelineConfig& c) { return method_name(c.method); }}},
      {"seed", size_field(&PipelineConfig::seed)},
      {"data_seed", size_field(&PipelineConfig::data_seed)},
      {"kg_path", string_field(&PipelineConfig::kg_path)},
      {"labels_path", string_field(&PipelineConfig::labels_path)},
      {"embedding_path", string_field(&PipelineConfig::embedding_path)},
      {"data_dir", string_field(&PipelineConfig::data_dir)},
      {"train_per_class", size_field(&PipelineConfig::train_per_class)},
      {"test_per_class", size_field(&PipelineConfig::test_per_class)},
      {"target_per_class", size_field(&PipelineConfig::target_per_class)},
      {"shift_noise", {[](PipelineConfig& c, const std::string& v) { c.target_shift.noise_sigma = to_double(v); },
                       [](const PipelineConfig& c) { return fmt(c.target_shift.noise_sigma); }}},
      {"shift_blur", {[](PipelineConfig& c, const std::string& v) { c.target_shift.blur_radius = to_u64(v); },
                      [](const PipelineConfig& c) { return std::to_string(c.target_shift.blur_radius); }}},
      {"shift_hue", {[](PipelineConfig& c, const std::string& v) { c.target_shift.hue_degrees = to_double(v); },
                     [](const PipelineConfig& c) { return fmt(c.target_shift.hue_degrees); }}},
      {"shift_brightness",
       {[](PipelineConfig& c, const std::string& v) { c.target_shift.brightness = to_double(v); },
        [](const PipelineConfig& c) { return fmt(c.target_shift.brightness); }}},
      {"aug_pad", {[](PipelineConfig& c, const std::string& v) { c.augment.pad = to_u64(v); },
                   [](const PipelineConfig& c) { return std::to_string(c.augment.pad); }}},
      {"aug_flip", {[](PipelineConfig& c, const std::string& v) { c.augment.flip_prob = to_double(v); },
                    [](const PipelineConfig& c) { return fmt(c.augment.flip_prob); }}},
      {"aug_brightness", {[](PipelineConfig& c, const std::string& v) { c.augment.brightness = to_double(v); },
                          [](const PipelineConfig& c) { return fmt(c.augment.brightness); }}},
      {"aug_contrast", {[](PipelineConfig& c, const std::string& v) { c.augment.contrast = to_double(v); },
                        [](const PipelineConfig& c) { return fmt(c.augment.contrast); }}},
      {"blocks", {[](PipelineConfig& c, const std::string& v) {
                    c.blocks.clear();
                    for (const std::string& b : split_list(v)) c.blocks.push_back(to_u64(b));
                  },
                  [](const PipelineConfig& c) {
                    std::string s;
                    for (std::size_t b : c.blocks) s += (s.empty() ? "" : ",") + std::to_string(b);
                    return s;
                  }}},
      {"d_p", size_field(&PipelineConfig::d_p)},
      {"batch", size_field(&PipelineConfig::batch)},
      {"pretrain_epochs", size_field(&PipelineConfig::pretrain_epochs)},
      {"lr", double_field(&PipelineConfig::lr)},
      {"tau", double_field(&PipelineConfig::tau)},
      {"adapt_epochs", size_field(&PipelineConfig::adapt_epochs)},
      {"adapt_lr", double_field(&PipelineConfig::adapt_lr)},
      {"probe_epochs", size_field(&PipelineConfig::probe_epochs)},
      {"probe_batch", size_field(&PipelineConfig::probe_batch)},
      {"probe_lr", double_field(&PipelineConfig::probe_lr)},
      {"kge_hidden", size_field(&PipelineConfig::kge_hidden)},
      {"kge_epochs", size_field(&PipelineConfig::kge_epochs)},
      {"kge_lr", double_field(&PipelineConfig::kge_lr)},
      {"feature_dim", size_field(&PipelineConfig::feature_dim)},
      {"subset", string_field(&PipelineConfig::subset)},
      {"methods", {[](PipelineConfig& c, const std::string& v) {
                     c.methods.clear();
                     for (const std::string& m : split_list(v)) c.methods.push_back(parse_method(m));
                   },
                   [](const PipelineConfig& c) {
                     std::string s;
                     for (Method m : c.methods) s += (s.empty() ? "" : ",") + method_name(m);
                     return s;
                   }}},
      {"target_only", bool_field(&PipelineConfig::target_only)},
      {"allow_embedding_change", bool_field(&PipelineConfig::allow_embedding_change)},
  };
  return f;
}

// Operational switches and run-local paths do not change what a run computes;
// the embedding is identified by its content hash instead of its path.
bool hashed(const std::string& key) {
  return key != "allow_embedding_change" && key != "data_dir" && key != "embedding_path";
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Kgnn: return "kgnn";
    case Method::Supcon: return "supcon";
    case Method::Ce: return "ce";
    case Method::ExternalEmbedding: return "external_embedding";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "kgnn") return Method::Kgnn;
  if (name == "supcon") return Method::Supcon;
  if (name == "ce") return Method::Ce;
  if (name == "external_embedding") return Method::ExternalEmbedding;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected kgnn, supcon, ce or external_embedding)");
}

bool uses_embedding(Method m) { return m == Method::Kgnn || m == Method::ExternalEmbedding; }
bool is_contrastive(Method m) { return m != Method::Ce; }

void PipelineConfig::set(const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void PipelineConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  if (method == Method::Kgnn && kg_path.empty() && embedding_path.empty())
    throw ConfigError("method kgnn requires kg_path (or a precomputed embedding_path)");
  if (method == Method::ExternalEmbedding && embedding_path.empty())
    throw ConfigError("method external_embedding requires embedding_path");
  need(!labels_path.empty() || !kg_path.empty(), "labels_path is required");
  need(batch >= 2, "batch must be at least 2");
  need(tau > 0, "tau must be positive");
  need(lr >= 0 && adapt_lr >= 0, "learning rates must be non-negative");
  need(probe_lr > 0, "probe_lr must be positive");
  need(probe_batch >= 1, "probe_batch must be positive");
  need(d_p >= 1, "d_p must be positive");
  need(train_per_class >= 1 && test_per_class >= 1 && target_per_class >= 1, "per-class counts must be positive");
  need(target_shift.noise_sigma >= 0, "shift_noise must be non-negative");
  need(augment.flip_prob >= 0 && augment.flip_prob <= 1, "aug_flip must be in [0, 1]");
  need(augment.brightness >= 0 && augment.contrast >= 0, "augmentation strengths must be non-negative");
  need(!methods.empty(), "methods must list at least one method");
  encoder_config().validate();
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields())
    if (key != "allow_embedding_change") out += key + "=" + f.get(*this) + "\n";
  return out;
}

std::string PipelineConfig::hash() const {
  std::string text;
  for (const auto& [key, f] : fields())
    if (hashed(key)) text += key + "=" + f.get(*this) + "\n";
  return content_hash(text);
}

double PipelineConfig::pretrain_lr() const {
  if (lr > 0) return lr;
  return method == Method::Ce ? 0.8 : 0.5;
}

double PipelineConfig::adaptation_lr() const { return adapt_lr > 0 ? adapt_lr : pretrain_lr(); }

vision::EncoderConfig PipelineConfig::encoder_config() const {
  vision::EncoderConfig e;
  e.blocks = blocks;
  return e;
}

std::vector<std::string> PipelineConfig::labels() const {
  if (labels_path.empty()) throw ConfigError("labels_path is required");
  std::vector<std::string> out;
  std::istringstream in(read_text_file(labels_path));
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  if (out.size() < 2) throw ConfigError("labels file '" + labels_path + "' lists fewer than 2 classes");
  return out;
}

PipelineConfig parse_config(std::string_view text, PipelineConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
  return parse_config(read_text_file(path), std::move(base));
}

std::uint64_t phase_seed(const PipelineConfig& c, Phase p, std::uint64_t extra) {
  return derive_seed(derive_seed(c.seed, static_cast<std::uint64_t>(p)), extra);
}

}  // namespace kgnn::pipeline

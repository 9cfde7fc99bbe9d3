#include <charconv>
#include <cmath>
#include <numeric>

#include "kgnn/error.hpp"
#include "kgnn/losses.hpp"
#include "kgnn/optim.hpp"
#include "kgnn/pipeline.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::pipeline {

namespace fs = std::filesystem;

namespace {

data::DomainShiftSpec half(const data::DomainShiftSpec& s) {
  return {s.noise_sigma / 2, (s.blur_radius + 1) / 2, s.hue_degrees / 2, s.brightness / 2};
}

const char* const kSplits[] = {"source_train", "source_test", "target_pool", "target_test", "shift_mild", "shift_strong"};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const std::string& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::string subset_tag(const std::string& subset) {
  std::string t = subset;
  if (!t.empty() && t.back() == '%') t = t.substr(0, t.size() - 1) + "pct";
  return t;
}

const std::string& meta(const vision::Checkpoint& c, const std::string& key) {
  auto it = c.metadata.find(key);
  if (it == c.metadata.end()) throw FormatError("checkpoint metadata has no '" + key + "'");
  return it->second;
}

/// Relabels `ds` onto `names`; a label outside `names` throws MappingError.
data::LabeledDataset onto(const data::LabeledDataset& ds, const std::vector<std::string>& names) {
  if (ds.label_names == names) return ds;
  for (std::size_t l = 0; l < ds.label_names.size(); ++l)
    if (std::find(names.begin(), names.end(), ds.label_names[l]) == names.end() && !ds.by_class()[l].empty())
      throw MappingError("label '" + ds.label_names[l] + "' is not in the model's label set");
  return data::filter_classes(ds, names);
}

std::vector<Tensor*> trainable(Model& m) {
  std::vector<Tensor*> p = m.encoder.parameters();
  if (m.head) for (Tensor* t : m.head->parameters()) p.push_back(t);
  if (m.classifier) for (Tensor* t : m.classifier->parameters()) p.push_back(t);
  return p;
}

void write_checkpoint(const vision::Checkpoint& c, const fs::path& path) {
  fs::create_directories(path.parent_path());
  write_file_bytes(path, vision::save_checkpoint(c));
}

}  // namespace

Datasets build_datasets(const PipelineConfig& c) {
  Datasets d;
  if (!c.data_dir.empty()) {
    const fs::path dir = c.data_dir;
    data::LabeledDataset* out[] = {&d.source_train, &d.source_test, &d.target_pool, &d.target_test, &d.mild_test, &d.strong_test};
    for (std::size_t i = 0; i < 6; ++i) *out[i] = data::load_manifest(dir / kSplits[i]);
    return d;
  }
  const auto kg = kg::load_triples_file(c.kg_path);
  const auto defs = data::class_defs_from_kg(kg, c.labels());
  const std::uint64_t s = c.data_seed;
  d.source_train = data::generate_synthetic(defs, c.train_per_class, derive_seed(s, 1), "source");
  d.source_test = data::generate_synthetic(defs, c.test_per_class, derive_seed(s, 2), "source");
  d.target_pool = data::shift_domain(data::generate_synthetic(defs, c.target_per_class, derive_seed(s, 3)), c.target_shift,
                                     derive_seed(s, 4), "target");
  d.target_test = data::shift_domain(data::generate_synthetic(defs, c.test_per_class, derive_seed(s, 5)), c.target_shift,
                                     derive_seed(s, 6), "target");
  d.mild_test = data::shift_domain(d.source_test, half(c.target_shift), derive_seed(s, 7), "shift_mild");
  d.strong_test = data::shift_domain(d.source_test, c.target_shift, derive_seed(s, 8), "shift_strong");
  return d;
}

void write_datasets(const Datasets& d, const fs::path& dir) {
  const data::LabeledDataset* in[] = {&d.source_train, &d.source_test, &d.target_pool, &d.target_test, &d.mild_test, &d.strong_test};
  for (std::size_t i = 0; i < 6; ++i) {
    fs::create_directories(dir / kSplits[i]);
    data::save_manifest(*in[i], dir / kSplits[i]);
  }
}

data::LabeledDataset make_subset(const data::LabeledDataset& pool, const std::string& subset, std::uint64_t seed) {
  auto number = [&](std::string_view digits) {
    double v = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || p != digits.data() + digits.size() || !(v > 0))
      throw ConfigError("bad subset '" + subset + "' (expected e.g. 5shot or 10%)");
    return v;
  };
  if (subset.size() > 4 && subset.ends_with("shot")) {
    const double k = number(std::string_view(subset).substr(0, subset.size() - 4));
    if (k != std::floor(k)) throw ConfigError("bad subset '" + subset + "': shot count must be an integer");
    return data::kshot_subset(pool, static_cast<std::size_t>(k), seed);
  }
  if (subset.size() > 1 && subset.back() == '%') {
    const double p = number(std::string_view(subset).substr(0, subset.size() - 1));
    if (p > 100) throw ConfigError("bad subset '" + subset + "': more than 100%");
    return data::fraction_subset(pool, p / 100.0, seed);
  }
  throw ConfigError("bad subset '" + subset + "' (expected e.g. 5shot or 10%)");
}

std::string loss_csv(const std::vector<LossRow>& rows) {
  std::string out = "epoch,step,loss,lr\n";
  char buf[64];
  for (const LossRow& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + ",";
    out += std::string(buf, std::to_chars(buf, buf + sizeof buf, r.loss).ptr) + ",";
    out += std::string(buf, std::to_chars(buf, buf + sizeof buf, r.lr).ptr) + "\n";
  }
  return out;
}

Model init_model(const PipelineConfig& c, Method m, std::size_t n_classes, std::uint64_t seed) {
  Rng rng(seed);
  Model out{vision::Encoder::init(c.encoder_config(), rng), std::nullopt, std::nullopt, {}};
  const std::size_t d_e = c.encoder_config().embedding_dim();
  if (is_contrastive(m))
    out.head = vision::ProjectionHead::init(d_e, c.d_p, rng);
  else
    out.classifier = vision::LinearProbe::init(d_e, n_classes, rng);
  return out;
}

vision::Checkpoint to_checkpoint(const Model& m) {
  vision::Checkpoint c;
  c.encoder = m.encoder;
  c.head = m.head;
  c.probe = m.classifier;
  if (m.classifier) c.metadata["probe.labels"] = join(m.classifier_labels);
  return c;
}

Model from_checkpoint(const vision::Checkpoint& c) {
  if (!c.encoder) throw FormatError("checkpoint has no encoder");
  Model m{*c.encoder, c.head, std::nullopt, {}};
  if (!c.head) {
    if (!c.probe) throw FormatError("checkpoint has neither a projection head nor a classifier");
    m.classifier = c.probe;
    m.classifier_labels = split(meta(c, "probe.labels"));
  }
  return m;
}

std::vector<LossRow> train_model(Model& m, const data::LabeledDataset& ds, const Tensor* anchors, const TrainSpec& s) {
  const std::size_t n = ds.size();
  if (n < 2) throw SamplingError("training needs at least 2 images, got " + std::to_string(n));
  if (s.batch < 1) throw ConfigError("batch must be positive");
  const bool contrastive = is_contrastive(s.method);
  if (contrastive && !m.head) throw ContractError("contrastive training needs a projection head");
  if (!contrastive && !m.classifier) throw ContractError("cross-entropy training needs a classifier");
  if (uses_embedding(s.method) && !anchors) throw ContractError("method needs class anchors");

  const std::size_t per_batch = std::min(s.batch, n);
  const std::size_t steps = n / per_batch;
  if (s.epochs == 0) return {};
  std::vector<Tensor*> params = trainable(m);
  Optimizer opt = s.cosine ? Optimizer::sgd_cosine(s.lr, s.epochs * steps) : Optimizer::sgd(s.lr);
  const std::size_t enc_count = m.encoder.parameters().size();

  std::vector<LossRow> rows;
  std::vector<std::size_t> perm(n);
  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    const std::uint64_t epoch_seed = derive_seed(s.seed, epoch);
    Rng rng(epoch_seed);
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t step = 0; step < steps; ++step) {
      const auto batch = data::view_pairs(ds, std::span(perm).subspan(step * per_batch, per_batch), s.augment,
                                          derive_seed(epoch_seed, 1 + step));
      Tape t;
      const std::vector<Var> vars = vision::bind_parameters(t, params, true);
      const std::vector<Var> enc(vars.begin(), vars.begin() + static_cast<long>(enc_count));
      const std::vector<Var> rest(vars.begin() + static_cast<long>(enc_count), vars.end());
      const Var h = vision::encode(t, m.encoder.config, enc, t.constant(batch.images));
      Var loss;
      if (contrastive) {
        const Var z = vision::project(t, rest, h);
        const Var total = anchors ? losses::kg_contrastive_loss(t, z, batch.labels, *anchors, s.tau)
                                  : losses::supcon_loss(t, z, batch.labels, s.tau);
        loss = ops::scale(t, total, 1.0 / static_cast<double>(batch.labels.size()));
      } else {
        loss = losses::cross_entropy(t, vision::probe_logits(t, rest, h), batch.labels);
      }
      const double value = t.value(loss).item();
      if (!std::isfinite(value)) throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
      rows.push_back({epoch, rows.size(), value, opt.current_lr()});
      const Gradients g = backward(t, loss);
      std::vector<const Tensor*> grads;
      for (Var v : vars) grads.push_back(&g.of(v));
      opt.step(params, grads);
      for (Tensor* p : params)
        if (!p->all_finite()) throw NumericalError("parameters became non-finite at epoch " + std::to_string(epoch));
    }
  }
  return rows;
}

EmbedResult phase_kg_embed(const PipelineConfig& c, const fs::path& out_dir) {
  const auto kg = kg::load_triples_file(c.kg_path);
  const auto labels = c.labels();
  const kge::GraphInputs in = kge::build_graph_inputs(kg, c.feature_dim);
  const kge::NodeLabels targets = kge::class_categories(kg, in.adjacency, labels);
  kge::KgeConfig kc;
  kc.hidden_dim = c.kge_hidden;
  kc.embedding_dim = c.d_p;
  kc.epochs = c.kge_epochs;
  kc.lr = c.kge_lr;
  kc.seed = phase_seed(c, Phase::KgEmbed);
  const kge::KgeModel model = kge::train_node_classifier(in.adjacency, in.features, targets, kc);
  EmbedResult r;
  r.table = kge::extract_class_embeddings(model, in.adjacency, in.features, kg, labels);
  std::map<std::string, std::string> category_of;
  for (const std::string& l : labels)
    category_of[l] = targets.categories[targets.targets.at(in.adjacency.index_of(kg.entities_with_label(l).front()))];
  r.diagnostics = kge::cluster_diagnostics(r.table, category_of);

  fs::create_directories(out_dir);
  write_text_file(out_dir / "embedding.emb", kge::export_embedding_file(r.table));
  std::string log;
  log += "intra_mean=" + std::to_string(r.diagnostics.intra_mean) + "\n";
  log += "inter_mean=" + std::to_string(r.diagnostics.inter_mean) + "\n";
  log += "margin=" + std::to_string(r.diagnostics.margin()) + "\n";
  if (!model.loss_history.empty()) log += "final_loss=" + std::to_string(model.loss_history.back()) + "\n";
  write_text_file(out_dir / "kge.txt", log);
  return r;
}

EmbeddingInfo load_embedding(const PipelineConfig& c, const fs::path& out_dir) {
  const fs::path path = c.embedding_path.empty() ? out_dir / "embedding.emb" : fs::path(c.embedding_path);
  if (!fs::exists(path))
    throw ConfigError("embedding file '" + path.string() + "' not found (run embed-kg first or set embedding_path)");
  const std::string text = read_text_file(path);
  EmbeddingInfo e{kge::import_embedding_file(text), content_hash(text)};
  if (e.table.dim() != c.d_p)
    throw ConfigError("embedding dimension " + std::to_string(e.table.dim()) + " does not match d_p " + std::to_string(c.d_p));
  return e;
}

vision::Checkpoint phase_pretrain(const PipelineConfig& c, const Datasets& d, const fs::path& out_dir) {
  c.validate();
  const data::LabeledDataset& ds = d.source_train;
  Model m = init_model(c, c.method, ds.label_names.size(), phase_seed(c, Phase::Pretrain));
  if (m.classifier) m.classifier_labels = ds.label_names;
  std::optional<EmbeddingInfo> emb;
  Tensor anchors;
  if (uses_embedding(c.method)) {
    emb = load_embedding(c, out_dir);
    anchors = kge::anchor_matrix(emb->table, ds.label_names);
  }
  const TrainSpec spec{c.method, c.pretrain_epochs, c.batch, c.pretrain_lr(), is_contrastive(c.method),
                       c.tau, c.augment, phase_seed(c, Phase::Pretrain, 1)};
  const auto rows = train_model(m, ds, emb ? &anchors : nullptr, spec);

  vision::Checkpoint ckpt = to_checkpoint(m);
  ckpt.metadata["phase"] = "pretrain";
  ckpt.metadata["method"] = method_name(c.method);
  ckpt.metadata["seed"] = std::to_string(c.seed);
  ckpt.metadata["config_hash"] = c.hash();
  if (emb) ckpt.metadata["embedding_hash"] = emb->hash;
  write_checkpoint(ckpt, out_dir / "pretrain.kgnc");
  write_text_file(out_dir / "pretrain_loss.csv", loss_csv(rows));
  return ckpt;
}

vision::Checkpoint phase_target_adapt(const PipelineConfig& c, const vision::Checkpoint& source, const Datasets& d,
                                      const std::string& subset, const fs::path& out_dir) {
  c.validate();
  const Method method = parse_method(meta(source, "method"));
  if (method != c.method)
    throw ConfigError("checkpoint was trained with method " + method_name(method) + ", config says " + method_name(c.method));
  Model m = from_checkpoint(source);
  const data::LabeledDataset picked = make_subset(d.target_pool, subset, phase_seed(c, Phase::Subset, fnv1a64(subset)));
  const data::LabeledDataset ds = m.classifier ? onto(picked, m.classifier_labels) : picked;

  std::optional<EmbeddingInfo> emb;
  Tensor anchors;
  if (uses_embedding(method)) {
    emb = load_embedding(c, out_dir);
    auto it = source.metadata.find("embedding_hash");
    const std::string before = it == source.metadata.end() ? "" : it->second;
    if (emb->hash != before && !c.allow_embedding_change)
      throw ConfigError("class embedding differs from the one used for pretraining (" + before + " vs " + emb->hash +
                        "); pass allow_embedding_change to continue");
    anchors = kge::anchor_matrix(emb->table, ds.label_names);
  }
  const TrainSpec spec{method, c.adapt_epochs, c.batch, c.adaptation_lr(), is_contrastive(method),
                       c.tau, c.augment, phase_seed(c, Phase::Adapt, fnv1a64(subset))};
  const auto rows = train_model(m, ds, emb ? &anchors : nullptr, spec);

  vision::Checkpoint ckpt = to_checkpoint(m);
  ckpt.metadata["phase"] = "adapt";
  ckpt.metadata["method"] = method_name(method);
  ckpt.metadata["seed"] = std::to_string(c.seed);
  ckpt.metadata["config_hash"] = c.hash();
  ckpt.metadata["subset"] = subset;
  if (emb) ckpt.metadata["embedding_hash"] = emb->hash;
  const std::string tag = subset_tag(subset);
  write_checkpoint(ckpt, out_dir / ("adapt_" + tag + ".kgnc"));
  write_text_file(out_dir / ("adapt_" + tag + "_loss.csv"), loss_csv(rows));
  return ckpt;
}

Tensor encode_dataset(const vision::Encoder& e, const data::LabeledDataset& ds) {
  constexpr std::size_t kChunk = 256;
  const std::size_t d = e.config.embedding_dim();
  Tensor out({ds.size(), d});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    idx.resize(std::min(kChunk, ds.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor h = vision::encode(e, ds.batch(idx));
    std::copy(h.data().begin(), h.data().end(), out.ptr() + start * d);
  }
  return out;
}

ProbeResult phase_linear_probe(const PipelineConfig& c, const vision::Checkpoint& ckpt, const data::LabeledDataset& train) {
  if (!ckpt.encoder) throw FormatError("checkpoint has no encoder");
  if (train.size() == 0) throw SamplingError("probe training set is empty");
  const Tensor features = encode_dataset(*ckpt.encoder, train);
  const std::size_t n = train.size(), d = features.dim(1);
  Rng rng(phase_seed(c, Phase::Probe, fnv1a64(train.domain_tag)));
  vision::LinearProbe probe = vision::LinearProbe::init(d, train.label_names.size(), rng);
  Optimizer opt = Optimizer::adam(c.probe_lr);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t epoch = 0; epoch < c.probe_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t start = 0; start < n; start += c.probe_batch) {
      const std::size_t b = std::min(c.probe_batch, n - start);
      Tensor x({b, d});
      std::vector<std::size_t> y(b);
      for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(features.ptr() + perm[start + i] * d, d, x.ptr() + i * d);
        y[i] = train.labels[perm[start + i]];
      }
      Tape t;
      const auto params = probe.parameters();
      const auto vars = vision::bind_parameters(t, params, true);
      const Var loss = losses::cross_entropy(t, vision::probe_logits(t, vars, t.constant(std::move(x))), y);
      const Gradients g = backward(t, loss);
      std::vector<const Tensor*> grads;
      for (Var v : vars) grads.push_back(&g.of(v));
      opt.step(params, grads);
    }
  }
  const auto pred = vision::argmax_rows(vision::probe_logits(probe, features));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += pred[i] == train.labels[i];

  ProbeResult r{ckpt, static_cast<double>(correct) / static_cast<double>(n)};
  r.checkpoint.probe = std::move(probe);
  r.checkpoint.metadata["probe.labels"] = join(train.label_names);
  r.checkpoint.metadata["probe.domain"] = train.domain_tag;
  return r;
}

data::LabeledDataset probe_training_set(const PipelineConfig& c, const vision::Checkpoint& ckpt, const Datasets& d) {
  const std::string& phase = meta(ckpt, "phase");
  if (phase == "pretrain") return d.source_train;
  const std::string& subset = meta(ckpt, "subset");
  return make_subset(d.target_pool, subset, phase_seed(c, Phase::Subset, fnv1a64(subset)));
}

}  // namespace kgnn::pipeline

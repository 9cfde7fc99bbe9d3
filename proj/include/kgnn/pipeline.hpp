#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgnn/datasets.hpp"
#include "kgnn/kge.hpp"
#include "kgnn/vision.hpp"

#ifndef KGNN_DATA_DIR
#define KGNN_DATA_DIR "data"
#endif

namespace kgnn::pipeline {

enum class Method { Kgnn, Supcon, Ce, ExternalEmbedding };

std::string method_name(Method m);
/// Throws ConfigError for an unknown name.
Method parse_method(std::string_view name);
bool uses_embedding(Method m);
bool is_contrastive(Method m);

struct PipelineConfig {
  Method method = Method::Kgnn;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 1234;

  std::string kg_path = KGNN_DATA_DIR "/roadsign.nt";
  std::string labels_path = KGNN_DATA_DIR "/roadsign_labels.txt";
  std::string embedding_path;  // external_embedding, or an explicit kgnn table
  std::string data_dir;        // manifests written by make-data; empty = render in memory

  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t target_per_class = 200;
  // Strong shift and target domain; the mild split applies half of each strength.
  data::DomainShiftSpec target_shift{0.15, 2, 15.0, -0.15};
  data::AugmentationSpec augment{4, 0.0, 0.2, 0.2};

  std::vector<std::size_t> blocks{16, 32, 64};
  std::size_t d_p = 32;

  std::size_t batch = 64;
  std::size_t pretrain_epochs = 200;
  double lr = 0;  // 0 = method default (0.5 contrastive, 0.8 ce)
  double tau = 0.5;
  std::size_t adapt_epochs = 50;
  double adapt_lr = 0;  // 0 = same as the pretrain rate
  std::size_t probe_epochs = 50;
  std::size_t probe_batch = 32;
  double probe_lr = 0.0004;

  std::size_t kge_hidden = 64;
  std::size_t kge_epochs = 200;
  double kge_lr = 0.01;
  std::size_t feature_dim = kge::kDefaultFeatureDim;

  std::string subset = "100%";
  std::vector<Method> methods{Method::Kgnn, Method::Supcon, Method::Ce};
  bool target_only = true;
  bool allow_embedding_change = false;

  /// Sets one key from text. Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Checks cross-field invariants. Throws ConfigError.
  void validate() const;
  /// Canonical `key=value` lines in sorted key order.
  std::string to_text() const;
  /// Content hash over the keys that affect results (paths and switches excluded).
  std::string hash() const;

  double pretrain_lr() const;
  double adaptation_lr() const;
  vision::EncoderConfig encoder_config() const;
  std::vector<std::string> labels() const;
};

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
/// Unknown keys or malformed lines throw ConfigError naming the line.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Per-phase seeds derived from the config seed.
enum class Phase : std::uint64_t { KgEmbed = 1, Pretrain = 2, Adapt = 3, Probe = 4, Subset = 5, TargetOnly = 6 };
std::uint64_t phase_seed(const PipelineConfig& c, Phase p, std::uint64_t extra = 0);

struct Datasets {
  data::LabeledDataset source_train, source_test;
  data::LabeledDataset target_pool, target_test;
  /// Shifted copies of source_test for generalization: half and full target shift.
  data::LabeledDataset mild_test, strong_test;
};

/// Renders all splits from data_seed, or loads them from data_dir.
Datasets build_datasets(const PipelineConfig& c);
void write_datasets(const Datasets& d, const std::filesystem::path& dir);

/// Subset names: "<k>shot" or "<p>%".
data::LabeledDataset make_subset(const data::LabeledDataset& pool, const std::string& subset, std::uint64_t seed);
inline const std::vector<std::string> kAdaptationGrid{"1shot", "5shot", "10%", "50%", "100%"};

struct LossRow {
  std::size_t epoch, step;
  double loss, lr;
};
std::string loss_csv(const std::vector<LossRow>& rows);

/// Trainable network: encoder plus either a projection head (contrastive
/// methods) or a classifier in the probe slot (ce).
struct Model {
  vision::Encoder encoder;
  std::optional<vision::ProjectionHead> head;
  std::optional<vision::LinearProbe> classifier;
  std::vector<std::string> classifier_labels;
};

Model init_model(const PipelineConfig& c, Method m, std::size_t n_classes, std::uint64_t seed);
vision::Checkpoint to_checkpoint(const Model& m);
Model from_checkpoint(const vision::Checkpoint& c);

struct TrainSpec {
  Method method;
  std::size_t epochs;
  std::size_t batch;
  double lr;
  bool cosine;
  double tau;
  data::AugmentationSpec augment;
  std::uint64_t seed;
};

/// Epoch = floor(n/N') view-paired batches over a seeded permutation, with
/// N' = min(N, n). Contrastive methods minimize the per-anchor mean loss;
/// `anchors` rows follow the dataset's label ids.
std::vector<LossRow> train_model(Model& m, const data::LabeledDataset& ds, const Tensor* anchors, const TrainSpec& s);

struct EmbeddingInfo {
  kge::ClassEmbeddingTable table;
  std::string hash;
};

/// Phase 1+2: KG -> embedding.emb in out_dir. Logs cluster diagnostics to kge.txt.
struct EmbedResult {
  kge::ClassEmbeddingTable table;
  kge::ClusterDiagnostics diagnostics;
};
EmbedResult phase_kg_embed(const PipelineConfig& c, const std::filesystem::path& out_dir);

/// Embedding table the method trains against: config embedding_path when set,
/// otherwise out_dir/embedding.emb. Throws ConfigError when it is missing.
EmbeddingInfo load_embedding(const PipelineConfig& c, const std::filesystem::path& out_dir);

/// Phase 3: train from scratch on the source split. Writes pretrain.kgnc and
/// pretrain_loss.csv.
vision::Checkpoint phase_pretrain(const PipelineConfig& c, const Datasets& d, const std::filesystem::path& out_dir);

/// Phase 4: continue training on a target subset. Writes adapt_<tag>.kgnc and
/// adapt_<tag>_loss.csv. For embedding methods the embedding hash must match
/// the checkpoint unless allow_embedding_change is set.
vision::Checkpoint phase_target_adapt(const PipelineConfig& c, const vision::Checkpoint& source, const Datasets& d,
                                      const std::string& subset, const std::filesystem::path& out_dir);

/// Phase 5: linear probe on frozen encoder features.
struct ProbeResult {
  vision::Checkpoint checkpoint;  // input checkpoint with the probe slot replaced
  double train_accuracy;
};
ProbeResult phase_linear_probe(const PipelineConfig& c, const vision::Checkpoint& ckpt, const data::LabeledDataset& train);

/// Training split the probe phase uses for a checkpoint: source_train after
/// pretrain, the recorded target subset after adapt.
data::LabeledDataset probe_training_set(const PipelineConfig& c, const vision::Checkpoint& ckpt, const Datasets& d);

struct EvalResult {
  double accuracy = 0;
  std::size_t count = 0;
  std::vector<std::string> labels;
  std::vector<double> per_class;  // NaN-free; classes without images report 0
};

/// Top-1 accuracy of encoder + probe. With a filter, only images whose label
/// is in the filter count, and predictions are restricted to filter classes.
/// Throws MappingError for a filter label unknown to the probe or dataset.
EvalResult evaluate(const vision::Checkpoint& ckpt, const data::LabeledDataset& ds,
                    const std::vector<std::string>* class_filter = nullptr);

/// Encoder features in chunks.
Tensor encode_dataset(const vision::Encoder& e, const data::LabeledDataset& ds);

struct MetricRow {
  std::string method, phase, domain, subset;
  std::uint64_t seed;
  double accuracy;
  std::optional<double> forgetting_delta;
};
inline constexpr std::string_view kMetricsHeader = "method,phase,domain,subset,seed,accuracy,forgetting_delta";
std::string metrics_csv(const std::vector<MetricRow>& rows);
/// Throws ParseError on a malformed file.
std::vector<MetricRow> parse_metrics_csv(std::string_view text);

enum class Scenario { Generalization, Adaptation };
Scenario parse_scenario(std::string_view name);

struct RunReport {
  std::vector<MetricRow> metrics;
  std::map<std::string, std::string> info;  // config snapshot, hashes, artifact paths
};

/// Generalization: embed, pretrain, probe, then evaluate on source, mild and
/// strong shifted test sets. Adaptation: additionally adapts on each grid
/// subset and reports target accuracy and source forgetting, plus a
/// target_only baseline. Writes metrics.csv, per_class.csv and report.txt.
RunReport run_scenario(const PipelineConfig& c, Scenario s, const std::filesystem::path& out_dir);

/// Median accuracy and forgetting per (method, phase, domain, subset) across seeds.
std::string summarize(const std::vector<MetricRow>& rows);

}  // namespace kgnn::pipeline

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "kgnn/error.hpp"
#include "kgnn/pipeline.hpp"
#include "kgnn/rng.hpp"

using namespace kgnn;
using namespace kgnn::pipeline;
namespace fs = std::filesystem;

namespace {

const std::string kDataDir = KGNN_TEST_DATA_DIR;

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name) : dir(fs::temp_directory_path() / ("kgnn_pipeline_test_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
};

/// Four classes from four categories, a one-block encoder and a few epochs.
PipelineConfig tiny(const fs::path& dir) {
  write_text_file(dir / "labels.txt", "danger_general\nwarning_left\nstop\nmandatory_ahead\n");
  PipelineConfig c;
  c.labels_path = (dir / "labels.txt").string();
  c.blocks = {4};
  c.d_p = 8;
  c.batch = 8;
  c.train_per_class = 6;
  c.test_per_class = 4;
  c.target_per_class = 6;
  c.pretrain_epochs = 2;
  c.adapt_epochs = 1;
  c.probe_epochs = 2;
  c.kge_epochs = 30;
  c.kge_hidden = 16;
  c.seed = 7;
  return c;
}

std::string bytes_of(const vision::Checkpoint& c) {
  const Bytes b = vision::save_checkpoint(c);
  return std::string(b.begin(), b.end());
}

/// Checkpoint with a zero-weight probe whose bias alone decides predictions.
vision::Checkpoint bias_only(const std::vector<std::string>& labels, const std::vector<double>& bias) {
  vision::Checkpoint c;
  Rng rng(1);
  vision::EncoderConfig ec;
  ec.blocks = {2};
  c.encoder = vision::Encoder::init(ec, rng);
  c.probe = vision::LinearProbe{Tensor::zeros({2, labels.size()}), Tensor(Shape{labels.size()}, bias)};
  std::string joined;
  for (const auto& l : labels) joined += (joined.empty() ? "" : ",") + l;
  c.metadata["probe.labels"] = joined;
  return c;
}

data::LabeledDataset noise_dataset(const std::vector<std::size_t>& per_class, std::uint64_t seed) {
  data::LabeledDataset ds;
  Rng rng(seed);
  for (std::size_t c = 0; c < per_class.size(); ++c) ds.label_names.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (std::size_t i = 0; i < per_class[c]; ++i) {
      data::Image img(data::kImagePixels);
      for (float& v : img) v = static_cast<float>(rng.uniform());
      ds.add(img, c);
    }
  return ds;
}

double epoch_mean(const std::vector<LossRow>& rows, std::size_t epoch) {
  double s = 0;
  std::size_t n = 0;
  for (const LossRow& r : rows)
    if (r.epoch == epoch) s += r.loss, ++n;
  return s / static_cast<double>(n);
}

}  // namespace

TEST(Config, ParsesKeyValueLinesWithComments) {
  const auto c = parse_config("# run\nmethod = ce\nseed=3\n\nblocks=8,16\nlr=0.25\naug_flip=0.5\n");
  EXPECT_EQ(c.method, Method::Ce);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.blocks, (std::vector<std::size_t>{8, 16}));
  EXPECT_DOUBLE_EQ(c.pretrain_lr(), 0.25);
  EXPECT_DOUBLE_EQ(c.augment.flip_prob, 0.5);
}

TEST(Config, MethodDefaultLearningRates) {
  PipelineConfig c;
  EXPECT_DOUBLE_EQ(c.pretrain_lr(), 0.5);
  c.method = Method::Ce;
  EXPECT_DOUBLE_EQ(c.pretrain_lr(), 0.8);
  EXPECT_DOUBLE_EQ(c.adaptation_lr(), 0.8);
  EXPECT_DOUBLE_EQ(c.probe_lr, 0.0004);
  EXPECT_EQ(c.batch, 64u);
  EXPECT_EQ(c.pretrain_epochs, 200u);
  EXPECT_DOUBLE_EQ(c.tau, 0.5);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("seed=1\nbogus=2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  EXPECT_THROW(parse_config("seed=-1"), ConfigError);
  EXPECT_THROW(parse_config("lr=fast"), ConfigError);
  EXPECT_THROW(parse_config("no equals sign"), ConfigError);
  EXPECT_THROW(parse_config("method=resnet"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, MethodRequirements) {
  PipelineConfig c;
  c.method = Method::ExternalEmbedding;
  EXPECT_THROW(c.validate(), ConfigError);
  c.embedding_path = "x.emb";
  EXPECT_NO_THROW(c.validate());
  c.method = Method::Kgnn;
  c.embedding_path.clear();
  c.kg_path.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c.method = Method::Ce;
  EXPECT_NO_THROW(c.validate());
  c.blocks = {3, 0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, CanonicalTextRoundTripsAndHashes) {
  PipelineConfig c;
  c.method = Method::Supcon;
  c.blocks = {8, 16, 32};
  c.lr = 0.3;
  const PipelineConfig back = parse_config(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.hash(), c.hash());
  PipelineConfig d = c;
  d.lr = 0.31;
  EXPECT_NE(d.hash(), c.hash());
  d = c;
  d.allow_embedding_change = true;
  EXPECT_EQ(d.hash(), c.hash());
}

TEST(Config, PhaseSeedsDiffer) {
  PipelineConfig c;
  std::set<std::uint64_t> seen;
  for (Phase p : {Phase::KgEmbed, Phase::Pretrain, Phase::Adapt, Phase::Probe, Phase::Subset, Phase::TargetOnly})
    seen.insert(phase_seed(c, p));
  EXPECT_EQ(seen.size(), 6u);
  PipelineConfig d = c;
  d.seed = 1;
  EXPECT_NE(phase_seed(c, Phase::Pretrain), phase_seed(d, Phase::Pretrain));
}

TEST(Subsets, KShotAndFractionCounts) {
  const auto pool = noise_dataset(std::vector<std::size_t>(20, 10), 3);
  const auto one = make_subset(pool, "1shot", 5);
  EXPECT_EQ(one.size(), 20u);
  for (const auto& cls : one.by_class()) EXPECT_EQ(cls.size(), 1u);
  const auto five = make_subset(pool, "5shot", 5);
  for (const auto& cls : five.by_class()) EXPECT_EQ(cls.size(), 5u);
  const auto tenth = make_subset(pool, "10%", 5);
  EXPECT_EQ(tenth.size(), 20u);
  for (const auto& cls : tenth.by_class()) EXPECT_LE(std::abs(static_cast<long>(cls.size()) - 1), 1);
  EXPECT_EQ(make_subset(pool, "100%", 5).size(), 200u);
  for (const char* bad : {"shot", "0shot", "2.5shot", "x%", "150%", "10", ""})
    EXPECT_THROW(make_subset(pool, bad, 5), ConfigError) << bad;
  EXPECT_THROW(make_subset(pool, "11shot", 5), SamplingError);
}

TEST(MetricsCsv, RoundTripAndHeader) {
  const std::vector<MetricRow> rows = {{"kgnn", "pretrain", "source", "full", 1, 0.75, std::nullopt},
                                       {"ce", "adapt", "target", "10%", 2, 0.1 + 0.2, -0.05}};
  const std::string text = metrics_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
  const auto back = parse_metrics_csv(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].accuracy, 0.1 + 0.2);
  EXPECT_EQ(back[1].forgetting_delta, -0.05);
  EXPECT_FALSE(back[0].forgetting_delta);
  EXPECT_EQ(metrics_csv(back), text);
}

TEST(MetricsCsv, MalformedFiles) {
  const std::string h = std::string(kMetricsHeader) + "\n";
  for (const std::string& bad : {std::string(""), std::string("a,b\n"), h + "kgnn,pretrain,source,full,1,0.5\n",
                                 h + "kgnn,pretrain,source,full,x,0.5,\n", h + "kgnn,pretrain,source,full,1,,\n",
                                 h + "kgnn,pretrain,source,full,1,0.5,zz\n"})
    EXPECT_THROW(parse_metrics_csv(bad), ParseError) << bad;
}

TEST(Summarize, MedianAcrossSeeds) {
  std::vector<MetricRow> rows;
  for (std::uint64_t s = 1; s <= 4; ++s) rows.push_back({"kgnn", "pretrain", "source", "full", s, 0.1 * s, std::nullopt});
  rows.push_back({"ce", "adapt", "target", "1shot", 1, 0.5, 0.2});
  const std::string out = summarize(rows);
  EXPECT_NE(out.find("kgnn,pretrain,source,full,4,0.25,"), std::string::npos) << out;
  EXPECT_NE(out.find("ce,adapt,target,1shot,1,0.5,0.2"), std::string::npos) << out;
}

TEST(Evaluate, ConstantPredictionEqualsClassFrequency) {
  const auto ds = noise_dataset({3, 5, 2}, 1);
  const auto c = bias_only(ds.label_names, {1.0, 0.0, 0.0});
  const EvalResult r = evaluate(c, ds);
  EXPECT_DOUBLE_EQ(r.accuracy, 3.0 / 10.0);
  EXPECT_EQ(r.count, 10u);
  EXPECT_EQ(r.per_class, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Evaluate, TiesGoToLowestIndex) {
  const auto ds = noise_dataset({2, 2}, 1);
  EXPECT_DOUBLE_EQ(evaluate(bias_only(ds.label_names, {0.0, 0.0}), ds).accuracy, 0.5);
  EXPECT_EQ(evaluate(bias_only(ds.label_names, {0.0, 0.0}), ds).per_class, (std::vector<double>{1.0, 0.0}));
}

TEST(Evaluate, FilterRestrictsTruthAndPrediction) {
  const auto ds = noise_dataset({4, 4, 4}, 2);
  // Class c2 wins unfiltered; with {c0, c1} the runner-up c1 is predicted.
  const auto c = bias_only(ds.label_names, {0.0, 1.0, 2.0});
  EXPECT_DOUBLE_EQ(evaluate(c, ds).accuracy, 1.0 / 3.0);
  const std::vector<std::string> two = {"c0", "c1"};
  const EvalResult r = evaluate(c, ds, &two);
  EXPECT_EQ(r.count, 8u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  const std::vector<std::string> all = ds.label_names;
  EXPECT_DOUBLE_EQ(evaluate(c, ds, &all).accuracy, evaluate(c, ds).accuracy);
  const std::vector<std::string> unknown = {"c0", "nope"};
  EXPECT_THROW(evaluate(c, ds, &unknown), MappingError);
}

TEST(Evaluate, MatchesClassesByName) {
  auto ds = noise_dataset({3, 3}, 4);
  auto c = bias_only({"c1", "c0"}, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(evaluate(c, ds).accuracy, 0.5);
  EXPECT_EQ(evaluate(c, ds).per_class, (std::vector<double>{1.0, 0.0}));
  c.metadata["probe.labels"] = "c1,zz";
  EXPECT_THROW(evaluate(c, ds), MappingError);
  c.metadata.erase("probe.labels");
  EXPECT_THROW(evaluate(c, ds), FormatError);
}

TEST(Evaluate, RandomProbeNearChance) {
  // Pixels carry no label information, so a random probe is a coin with p = 1/C.
  const std::size_t classes = 10, per = 60;
  const auto ds = noise_dataset(std::vector<std::size_t>(classes, per), 8);
  Rng rng(3);
  vision::Checkpoint c;
  vision::EncoderConfig ec;
  ec.blocks = {8};
  c.encoder = vision::Encoder::init(ec, rng);
  c.probe = vision::LinearProbe::init(8, classes, rng);
  std::string names;
  for (const auto& l : ds.label_names) names += (names.empty() ? "" : ",") + l;
  c.metadata["probe.labels"] = names;
  const double n = static_cast<double>(classes * per), p = 1.0 / static_cast<double>(classes);
  EXPECT_NEAR(evaluate(c, ds).accuracy, p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Evaluate, DoesNotMutateCheckpoint) {
  const auto ds = noise_dataset({2, 2}, 1);
  const auto c = bias_only(ds.label_names, {0.3, 0.1});
  const std::string before = bytes_of(c);
  evaluate(c, ds);
  EXPECT_EQ(bytes_of(c), before);
}

TEST(Probe, FrozenEncoderAndHead) {
  Sandbox box("frozen");
  PipelineConfig c = tiny(box.dir);
  const auto ds = noise_dataset({4, 4}, 2);
  for (Method m : {Method::Kgnn, Method::Supcon, Method::Ce}) {
    Model model = init_model(c, m, 2, 11);
    model.classifier_labels = ds.label_names;
    vision::Checkpoint ckpt = to_checkpoint(model);
    const std::string enc_before = bytes_of({{}, ckpt.encoder, ckpt.head, std::nullopt});
    const ProbeResult r = phase_linear_probe(c, ckpt, ds);
    EXPECT_EQ(bytes_of({{}, r.checkpoint.encoder, r.checkpoint.head, std::nullopt}), enc_before) << method_name(m);
    ASSERT_TRUE(r.checkpoint.probe);
    EXPECT_EQ(r.checkpoint.probe->class_count(), 2u);
  }
}

TEST(Probe, SeparableFeaturesReachFullTrainAccuracy) {
  // Black and white images give features 0 and a positive vector under a zero-bias encoder.
  data::LabeledDataset ds;
  ds.label_names = {"dark", "light"};
  for (int i = 0; i < 8; ++i) {
    ds.add(data::Image(data::kImagePixels, 0.0f), 0);
    ds.add(data::Image(data::kImagePixels, 1.0f), 1);
  }
  Sandbox box("separable");
  PipelineConfig c = tiny(box.dir);
  c.probe_epochs = 200;
  c.probe_lr = 0.05;
  Model model = init_model(c, Method::Supcon, 2, 3);
  const ProbeResult r = phase_linear_probe(c, to_checkpoint(model), ds);
  EXPECT_DOUBLE_EQ(r.train_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(evaluate(r.checkpoint, ds).accuracy, 1.0);
}

TEST(Probe, AtLeastMajorityBaseline) {
  Sandbox box("majority");
  PipelineConfig c = tiny(box.dir);
  c.probe_epochs = 100;
  c.probe_lr = 0.01;
  const auto ds = noise_dataset({12, 4}, 6);
  const ProbeResult r = phase_linear_probe(c, to_checkpoint(init_model(c, Method::Supcon, 2, 3)), ds);
  EXPECT_GE(r.train_accuracy, 12.0 / 16.0);
}

TEST(Phases, EmbeddingFileCoversLabelsDeterministically) {
  Sandbox box("embed");
  const PipelineConfig c = tiny(box.dir);
  const EmbedResult r = phase_kg_embed(c, box.dir / "a");
  phase_kg_embed(c, box.dir / "b");
  EXPECT_EQ(r.table.labels(), c.labels());
  for (const auto& l : r.table.labels()) {
    double s = 0;
    for (double v : r.table.at(l).data()) s += v * v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(r.table.dim(), c.d_p);
  EXPECT_EQ(read_text_file(box.dir / "a" / "embedding.emb"), read_text_file(box.dir / "b" / "embedding.emb"));
  EXPECT_TRUE(fs::exists(box.dir / "a" / "kge.txt"));
}

TEST(Phases, UnlinkedLabelFailsBeforeTraining) {
  Sandbox box("unlinked");
  PipelineConfig c = tiny(box.dir);
  write_text_file(box.dir / "labels.txt", "stop\nno_such_sign\n");
  EXPECT_THROW(phase_kg_embed(c, box.dir), MappingError);
  EXPECT_FALSE(fs::exists(box.dir / "embedding.emb"));
}

TEST(Phases, ZeroEpochPretrainEqualsSeededInit) {
  Sandbox box("zero");
  PipelineConfig c = tiny(box.dir);
  c.method = Method::Supcon;
  c.pretrain_epochs = 0;
  const Datasets d = build_datasets(c);
  const vision::Checkpoint ckpt = phase_pretrain(c, d, box.dir);
  const Model init = init_model(c, Method::Supcon, 4, phase_seed(c, Phase::Pretrain));
  EXPECT_EQ(*ckpt.encoder, init.encoder);
  EXPECT_EQ(*ckpt.head, *init.head);
  EXPECT_EQ(read_text_file(box.dir / "pretrain_loss.csv"), "epoch,step,loss,lr\n");
}

TEST(Phases, CeIgnoresEmbeddingAndKgnnNeedsIt) {
  Sandbox box("gating");
  PipelineConfig c = tiny(box.dir);
  c.pretrain_epochs = 1;
  const Datasets d = build_datasets(c);
  c.method = Method::Ce;
  c.embedding_path = (box.dir / "missing.emb").string();
  EXPECT_NO_THROW(phase_pretrain(c, d, box.dir / "ce"));
  c.method = Method::Kgnn;
  EXPECT_THROW(phase_pretrain(c, d, box.dir / "kgnn"), ConfigError);
  c.embedding_path.clear();
  EXPECT_THROW(phase_pretrain(c, d, box.dir / "kgnn"), ConfigError);
}

TEST(Phases, EmbeddingDimensionMustMatchProjection) {
  Sandbox box("dim");
  PipelineConfig c = tiny(box.dir);
  phase_kg_embed(c, box.dir);
  const Datasets d = build_datasets(c);
  c.d_p = 6;
  EXPECT_THROW(phase_pretrain(c, d, box.dir), ConfigError);
}

TEST(Phases, LossDecreasesForAllMethods) {
  Sandbox box("decrease");
  PipelineConfig c = tiny(box.dir);
  c.blocks = {8, 16};
  c.train_per_class = 16;
  c.batch = 16;
  phase_kg_embed(c, box.dir);
  const Datasets d = build_datasets(c);
  for (Method m : {Method::Kgnn, Method::Supcon, Method::Ce}) {
    c.method = m;
    c.lr = m == Method::Ce ? 0.1 : 0.5;
    Model model = init_model(c, m, 4, 5);
    model.classifier_labels = d.source_train.label_names;
    const auto table = load_embedding(c, box.dir).table;
    const Tensor anchors = kge::anchor_matrix(table, d.source_train.label_names);
    const TrainSpec spec{m, 11, c.batch, c.pretrain_lr(), m != Method::Ce, c.tau, c.augment, 9};
    const auto rows = train_model(model, d.source_train, m == Method::Kgnn ? &anchors : nullptr, spec);
    ASSERT_EQ(rows.size(), 11u * 4u);
    EXPECT_LT(epoch_mean(rows, 10), epoch_mean(rows, 0)) << method_name(m);
  }
}

TEST(Phases, EpochIsFloorOfFullBatches) {
  Sandbox box("epoch");
  PipelineConfig c = tiny(box.dir);
  c.method = Method::Supcon;
  c.pretrain_epochs = 2;
  c.batch = 10;  // 24 images -> 2 full batches, 4 images dropped
  const auto d = build_datasets(c);
  phase_pretrain(c, d, box.dir);
  const std::string csv = read_text_file(box.dir / "pretrain_loss.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("\n1,3,"), std::string::npos);
}

TEST(Phases, AdaptOneShotUsesOneImagePerClass) {
  Sandbox box("oneshot");
  PipelineConfig c = tiny(box.dir);
  c.method = Method::Ce;
  c.pretrain_epochs = 1;
  const Datasets d = build_datasets(c);
  const auto pre = phase_pretrain(c, d, box.dir);
  const auto adapted = phase_target_adapt(c, pre, d, "1shot", box.dir);
  EXPECT_EQ(adapted.metadata.at("subset"), "1shot");
  const auto set = probe_training_set(c, adapted, d);
  EXPECT_EQ(set.size(), 4u);
  EXPECT_EQ(set.domain_tag, "target");
  // One batch of min(N, 4) originals per epoch.
  const std::string csv = read_text_file(box.dir / "adapt_1shot_loss.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Phases, ZeroEpochAdaptKeepsMetrics) {
  Sandbox box("zeroadapt");
  PipelineConfig c = tiny(box.dir);
  c.method = Method::Supcon;
  const Datasets d = build_datasets(c);
  const auto pre = phase_pretrain(c, d, box.dir);
  c.adapt_epochs = 0;
  const auto adapted = phase_target_adapt(c, pre, d, "100%", box.dir);
  EXPECT_EQ(*adapted.encoder, *pre.encoder);
  EXPECT_EQ(*adapted.head, *pre.head);
  const auto probed_pre = phase_linear_probe(c, pre, d.source_train).checkpoint;
  auto probed_adapted = phase_linear_probe(c, adapted, d.source_train).checkpoint;
  EXPECT_EQ(evaluate(probed_pre, d.source_test).per_class, evaluate(probed_adapted, d.source_test).per_class);
}

TEST(Phases, EmbeddingSwapRefusedUnlessAllowed) {
  Sandbox box("swap");
  PipelineConfig c = tiny(box.dir);
  phase_kg_embed(c, box.dir);
  const Datasets d = build_datasets(c);
  const auto pre = phase_pretrain(c, d, box.dir);
  const auto same = phase_target_adapt(c, pre, d, "5shot", box.dir);
  EXPECT_EQ(same.metadata.at("embedding_hash"), pre.metadata.at("embedding_hash"));
  EXPECT_EQ(pre.metadata.at("embedding_hash"), content_hash(read_text_file(box.dir / "embedding.emb")));

  PipelineConfig other = c;
  other.seed = 99;
  phase_kg_embed(other, box.dir);
  EXPECT_THROW(phase_target_adapt(c, pre, d, "5shot", box.dir), ConfigError);
  c.allow_embedding_change = true;
  EXPECT_NO_THROW(phase_target_adapt(c, pre, d, "5shot", box.dir));
}

TEST(Phases, TargetLabelMissingFromEmbeddingIsMappingError) {
  Sandbox box("missinglabel");
  PipelineConfig c = tiny(box.dir);
  phase_kg_embed(c, box.dir);
  Datasets d = build_datasets(c);
  const auto pre = phase_pretrain(c, d, box.dir);
  d.target_pool.label_names[2] = "unseen_sign";
  EXPECT_THROW(phase_target_adapt(c, pre, d, "1shot", box.dir), MappingError);
}

TEST(Phases, CheckpointMethodMustMatchConfig) {
  Sandbox box("mismatch");
  PipelineConfig c = tiny(box.dir);
  c.method = Method::Ce;
  const Datasets d = build_datasets(c);
  const auto pre = phase_pretrain(c, d, box.dir);
  c.method = Method::Supcon;
  EXPECT_THROW(phase_target_adapt(c, pre, d, "1shot", box.dir), ConfigError);
}

TEST(Phases, RerunFromSavedArtifactsIsIdentical) {
  Sandbox box("isolation");
  PipelineConfig c = tiny(box.dir);
  c.method = Method::Supcon;
  const Datasets d = build_datasets(c);
  const auto pre = phase_pretrain(c, d, box.dir);
  const auto adapted = phase_target_adapt(c, pre, d, "50%", box.dir / "x");
  const auto probed = phase_linear_probe(c, adapted, probe_training_set(c, adapted, d)).checkpoint;

  // Delete everything downstream of pretrain and rebuild from the file on disk.
  fs::remove_all(box.dir / "x");
  const auto loaded = vision::load_checkpoint(read_file_bytes(box.dir / "pretrain.kgnc"));
  const auto adapted2 = phase_target_adapt(c, loaded, build_datasets(c), "50%", box.dir / "x");
  const auto probed2 = phase_linear_probe(c, adapted2, probe_training_set(c, adapted2, d)).checkpoint;
  EXPECT_EQ(bytes_of(adapted2), bytes_of(adapted));
  EXPECT_EQ(bytes_of(probed2), bytes_of(probed));
}

TEST(Datasets, SplitsAreDeterministicAndTagged) {
  Sandbox box("splits");
  const PipelineConfig c = tiny(box.dir);
  const Datasets a = build_datasets(c), b = build_datasets(c);
  EXPECT_EQ(a.source_train, b.source_train);
  EXPECT_EQ(a.strong_test, b.strong_test);
  EXPECT_EQ(a.source_train.size(), 24u);
  EXPECT_EQ(a.target_pool.domain_tag, "target");
  EXPECT_EQ(a.mild_test.domain_tag, "shift_mild");
  EXPECT_EQ(a.strong_test.labels, a.source_test.labels);
  EXPECT_NE(a.strong_test.pixels, a.source_test.pixels);

  write_datasets(a, box.dir / "data");
  PipelineConfig from_disk = c;
  from_disk.data_dir = (box.dir / "data").string();
  const Datasets r = build_datasets(from_disk);
  EXPECT_EQ(r.source_train, a.source_train);
  EXPECT_EQ(r.target_test, a.target_test);
  EXPECT_EQ(r.mild_test, a.mild_test);
}

TEST(Scenario, GeneralizationReportShapeAndDeterminism) {
  Sandbox box("general");
  PipelineConfig c = tiny(box.dir);
  c.pretrain_epochs = 1;
  const RunReport r = run_scenario(c, Scenario::Generalization, box.dir / "a");
  ASSERT_EQ(r.metrics.size(), 9u);
  std::set<std::pair<std::string, std::string>> cells;
  for (const auto& row : r.metrics) {
    cells.insert({row.method, row.domain});
    EXPECT_GE(row.accuracy, 0.0);
    EXPECT_LE(row.accuracy, 1.0);
  }
  EXPECT_EQ(cells.size(), 9u);
  run_scenario(c, Scenario::Generalization, box.dir / "b");
  for (const char* f : {"metrics.csv", "per_class.csv", "kg/embedding.emb", "kgnn/pretrain.kgnc", "ce/pretrain_loss.csv"})
    EXPECT_EQ(read_text_file(box.dir / "a" / f), read_text_file(box.dir / "b" / f)) << f;
}

TEST(Scenario, AdaptationGridRows) {
  Sandbox box("adapt");
  PipelineConfig c = tiny(box.dir);
  c.pretrain_epochs = 1;
  c.methods = {Method::Kgnn, Method::Ce};
  const RunReport r = run_scenario(c, Scenario::Adaptation, box.dir);
  std::map<std::string, std::vector<std::string>> subsets;
  for (const auto& row : r.metrics)
    if (row.phase == "adapt") {
      subsets[row.method].push_back(row.subset);
      EXPECT_EQ(row.forgetting_delta.has_value(), row.method != "target_only");
    }
  ASSERT_EQ(subsets.size(), 3u);
  for (const auto& [method, s] : subsets) EXPECT_EQ(s, kAdaptationGrid) << method;
  EXPECT_EQ(parse_metrics_csv(read_text_file(box.dir / "metrics.csv")).size(), r.metrics.size());
  // Every kgnn checkpoint records the embedding it trained against.
  const std::string h = content_hash(read_text_file(box.dir / "kg" / "embedding.emb"));
  for (const char* f : {"pretrain.kgnc", "adapt_1shot.kgnc", "adapt_100pct.kgnc"})
    EXPECT_EQ(vision::load_checkpoint(read_file_bytes(box.dir / "kgnn" / f)).metadata.at("embedding_hash"), h) << f;
}

TEST(Scenario, ErrorsCarryPhaseName) {
  Sandbox box("phaseerr");
  PipelineConfig c = tiny(box.dir);
  c.methods = {Method::Ce};
  c.target_per_class = 3;
  try {
    run_scenario(c, Scenario::Adaptation, box.dir);
    FAIL();
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("ce.adapt.5shot"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_scenario("both"), ConfigError);
}

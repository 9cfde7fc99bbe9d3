// Command-line driver for the five training phases and the two evaluation scenarios.
#include <CLI11.hpp>

#include <cstdio>
#include <malloc.h>
#include <iostream>

#include "kgnn/error.hpp"
#include "kgnn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace kgnn;
using namespace kgnn::pipeline;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string out_dir = "runs/default";
  bool allow_embedding_change = false;
  std::vector<std::string> overrides;

  std::string checkpoint;
  std::string subset;
  std::string scenario = "generalization";
  std::vector<std::string> filter;
  std::vector<std::string> inputs;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.method.empty()) c.method = parse_method(o.method);
  if (o.allow_embedding_change) c.allow_embedding_change = true;
  c.validate();
  return c;
}

vision::Checkpoint read_checkpoint(const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError("checkpoint '" + p.string() + "' not found");
  return vision::load_checkpoint(read_file_bytes(p));
}

void write_checkpoint(const vision::Checkpoint& c, const fs::path& p) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  write_file_bytes(p, vision::save_checkpoint(c));
}

std::string meta_or(const vision::Checkpoint& c, const std::string& key, const std::string& fallback) {
  auto it = c.metadata.find(key);
  return it == c.metadata.end() ? fallback : it->second;
}

int exit_code(const Error& e) {
  const std::string& k = e.kind();
  if (k == "config") return 2;
  if (k == "numerical") return 4;
  if (k == "format" || k == "parse" || k == "mapping" || k == "sampling" || k == "lookup") return 3;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep per-step tape buffers on the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  CLI::App app{"Knowledge-graph guided contrastive training pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "key=value config file");
  app.add_option("--seed", o.seed, "run seed");
  app.add_option("--method", o.method, "kgnn, supcon, ce or external_embedding");
  app.add_option("--out-dir", o.out_dir, "run directory")->capture_default_str();
  app.add_flag("--allow-embedding-change", o.allow_embedding_change, "accept a different class embedding when adapting");
  app.add_option("--set", o.overrides, "config override key=value (repeatable)");

  auto* embed = app.add_subcommand("embed-kg", "train the graph model and write embedding.emb");
  auto* make_data = app.add_subcommand("make-data", "render all dataset splits into <out-dir>/data");
  auto* pretrain = app.add_subcommand("pretrain", "train encoder and head from scratch on the source split");
  auto* adapt = app.add_subcommand("adapt", "continue training on a target subset");
  adapt->add_option("--checkpoint", o.checkpoint, "source checkpoint (default <out-dir>/pretrain.kgnc)");
  adapt->add_option("--subset", o.subset, "1shot, 5shot, 10%, 50%, 100% ...");
  auto* probe = app.add_subcommand("probe", "train a linear probe on frozen features");
  probe->add_option("--checkpoint", o.checkpoint, "checkpoint (default <out-dir>/pretrain.kgnc)");
  auto* eval = app.add_subcommand("eval", "evaluate a probed checkpoint on every test split");
  eval->add_option("--checkpoint", o.checkpoint, "probed checkpoint (default <out-dir>/pretrain_probe.kgnc)");
  eval->add_option("--filter", o.filter, "restrict to these class labels")->delimiter(',');
  auto* scenario = app.add_subcommand("scenario", "run a full scenario and write metrics.csv");
  scenario->add_option("--scenario", o.scenario, "generalization or adaptation")->capture_default_str();
  auto* report = app.add_subcommand("report", "median accuracy per method/domain/subset across metrics files");
  report->add_option("inputs", o.inputs, "metrics.csv files (default <out-dir>/metrics.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const fs::path out = o.out_dir;
  try {
    if (report->parsed()) {
      if (o.inputs.empty()) o.inputs.push_back((out / "metrics.csv").string());
      std::vector<MetricRow> rows;
      for (const std::string& f : o.inputs) {
        if (!fs::exists(f)) throw ConfigError("metrics file '" + f + "' not found");
        for (auto& r : parse_metrics_csv(read_text_file(f))) rows.push_back(std::move(r));
      }
      const std::string summary = summarize(rows);
      fs::create_directories(out);
      write_text_file(out / "summary.csv", summary);
      std::cout << summary;
      return 0;
    }

    const PipelineConfig c = resolve(o);
    if (embed->parsed()) {
      const EmbedResult r = phase_kg_embed(c, out);
      std::printf("wrote %s (%zu classes, dim %zu)\n", (out / "embedding.emb").c_str(), r.table.size(), r.table.dim());
      std::printf("intra=%.4f inter=%.4f margin=%.4f\n", r.diagnostics.intra_mean, r.diagnostics.inter_mean,
                  r.diagnostics.margin());
    } else if (make_data->parsed()) {
      write_datasets(build_datasets(c), out / "data");
      std::printf("wrote %s\n", (out / "data").c_str());
    } else if (pretrain->parsed()) {
      phase_pretrain(c, build_datasets(c), out);
      std::printf("wrote %s\n", (out / "pretrain.kgnc").c_str());
    } else if (adapt->parsed()) {
      const auto source = read_checkpoint(o.checkpoint.empty() ? out / "pretrain.kgnc" : fs::path(o.checkpoint));
      const std::string subset = o.subset.empty() ? c.subset : o.subset;
      phase_target_adapt(c, source, build_datasets(c), subset, out);
      std::printf("adapted on %s\n", subset.c_str());
    } else if (probe->parsed()) {
      const fs::path in = o.checkpoint.empty() ? out / "pretrain.kgnc" : fs::path(o.checkpoint);
      const auto ckpt = read_checkpoint(in);
      const Datasets d = build_datasets(c);
      const ProbeResult r = phase_linear_probe(c, ckpt, probe_training_set(c, ckpt, d));
      const fs::path dest = out / (in.stem().string() + "_probe.kgnc");
      write_checkpoint(r.checkpoint, dest);
      std::printf("wrote %s (train accuracy %.4f)\n", dest.c_str(), r.train_accuracy);
    } else if (eval->parsed()) {
      const auto ckpt = read_checkpoint(o.checkpoint.empty() ? out / "pretrain_probe.kgnc" : fs::path(o.checkpoint));
      const Datasets d = build_datasets(c);
      const std::string method = meta_or(ckpt, "method", method_name(c.method));
      const std::string phase = meta_or(ckpt, "phase", "unknown");
      const std::string subset = meta_or(ckpt, "subset", "full");
      const std::pair<const char*, const data::LabeledDataset*> splits[] = {
          {"source", &d.source_test}, {"shift_mild", &d.mild_test}, {"shift_strong", &d.strong_test}, {"target", &d.target_test}};
      std::vector<MetricRow> rows;
      for (const auto& [domain, ds] : splits) {
        const EvalResult e = evaluate(ckpt, *ds, o.filter.empty() ? nullptr : &o.filter);
        rows.push_back({method, phase, domain, subset, c.seed, e.accuracy, std::nullopt});
      }
      const std::string csv = metrics_csv(rows);
      fs::create_directories(out);
      write_text_file(out / "metrics.csv", csv);
      std::cout << csv;
    } else if (scenario->parsed()) {
      const RunReport r = run_scenario(c, parse_scenario(o.scenario), out);
      std::cout << metrics_csv(r.metrics);
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.kind().c_str(), e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

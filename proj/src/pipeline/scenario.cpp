#include <algorithm>
#include <chrono>
#include <charconv>

#include "kgnn/error.hpp"
#include "kgnn/pipeline.hpp"

namespace kgnn::pipeline {

namespace fs = std::filesystem;

namespace {

template <class E>
[[noreturn]] void retag(const E& e, const std::string& phase) {
  throw E(phase + ": " + e.what());
}

/// Runs `fn`, prefixing any library error with the phase name while keeping its type.
template <class F>
auto in_phase(const std::string& phase, std::map<std::string, std::string>& info, F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto& slot = info["time." + phase];
    slot = std::to_string((slot.empty() ? 0.0 : std::stod(slot)) + s);
  };
  try {
    auto r = fn();
    record();
    return r;
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.column(), phase + ": " + e.what());
  } catch (const DimensionError& e) { retag(e, phase);
  } catch (const DegenerateVectorError& e) { retag(e, phase);
  } catch (const ContractError& e) { retag(e, phase);
  } catch (const LookupError& e) { retag(e, phase);
  } catch (const ConfigError& e) { retag(e, phase);
  } catch (const MappingError& e) { retag(e, phase);
  } catch (const SamplingError& e) { retag(e, phase);
  } catch (const FormatError& e) { retag(e, phase);
  } catch (const NumericalError& e) { retag(e, phase);
  }
}

std::string num(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

struct Writer {
  std::vector<MetricRow> rows;
  std::string per_class = "method,phase,domain,subset,seed,label,accuracy\n";

  void add(MetricRow row, const EvalResult& e) {
    for (std::size_t k = 0; k < e.labels.size(); ++k)
      per_class += row.method + "," + row.phase + "," + row.domain + "," + row.subset + "," + std::to_string(row.seed) +
                   "," + e.labels[k] + "," + num(e.per_class[k]) + "\n";
    rows.push_back(std::move(row));
  }
};

void save(const vision::Checkpoint& c, const fs::path& path) {
  fs::create_directories(path.parent_path());
  write_file_bytes(path, vision::save_checkpoint(c));
}

}  // namespace

Scenario parse_scenario(std::string_view name) {
  if (name == "generalization") return Scenario::Generalization;
  if (name == "adaptation") return Scenario::Adaptation;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected generalization or adaptation)");
}

RunReport run_scenario(const PipelineConfig& c, Scenario s, const fs::path& out_dir) {
  RunReport report;
  auto& info = report.info;
  for (Method m : c.methods) {
    PipelineConfig mc = c;
    mc.method = m;
    mc.validate();
  }
  fs::create_directories(out_dir);
  info["config_hash"] = c.hash();
  info["scenario"] = s == Scenario::Generalization ? "generalization" : "adaptation";
  const Datasets d = in_phase("data", info, [&] { return build_datasets(c); });

  const bool needs_kg = c.embedding_path.empty() &&
                        std::find(c.methods.begin(), c.methods.end(), Method::Kgnn) != c.methods.end();
  if (needs_kg) {
    in_phase("kg_embed", info, [&] { return phase_kg_embed(c, out_dir / "kg"); });
    info["embedding"] = (out_dir / "kg" / "embedding.emb").string();
  }

  // Common classes for forgetting: source labels that also name a target class.
  std::vector<std::string> common;
  for (const std::string& l : d.source_test.label_names)
    if (std::find(d.target_test.label_names.begin(), d.target_test.label_names.end(), l) != d.target_test.label_names.end())
      common.push_back(l);

  Writer w;
  for (Method m : c.methods) {
    PipelineConfig mc = c;
    mc.method = m;
    if (m == Method::Kgnn && needs_kg) mc.embedding_path = (out_dir / "kg" / "embedding.emb").string();
    const std::string name = method_name(m);
    const fs::path dir = out_dir / name;
    const vision::Checkpoint pre = in_phase(name + ".pretrain", info, [&] { return phase_pretrain(mc, d, dir); });
    const vision::Checkpoint probed =
        in_phase(name + ".probe", info, [&] { return phase_linear_probe(mc, pre, d.source_train).checkpoint; });
    save(probed, dir / "pretrain_probe.kgnc");
    info["checkpoint." + name] = (dir / "pretrain.kgnc").string();

    if (s == Scenario::Generalization) {
      const std::pair<const char*, const data::LabeledDataset*> domains[] = {
          {"source", &d.source_test}, {"shift_mild", &d.mild_test}, {"shift_strong", &d.strong_test}};
      for (const auto& [domain, ds] : domains) {
        const EvalResult e = in_phase(name + ".eval", info, [&] { return evaluate(probed, *ds); });
        w.add({name, "pretrain", domain, "full", c.seed, e.accuracy, std::nullopt}, e);
      }
      continue;
    }

    const EvalResult before = in_phase(name + ".eval", info, [&] { return evaluate(probed, d.source_test, &common); });
    w.add({name, "pretrain", "source", "full", c.seed, before.accuracy, std::nullopt}, before);
    for (const std::string& subset : kAdaptationGrid) {
      const std::string tag = name + ".adapt." + subset;
      const vision::Checkpoint adapted = in_phase(tag, info, [&] { return phase_target_adapt(mc, pre, d, subset, dir); });
      const vision::Checkpoint tprobe = in_phase(tag + ".probe", info, [&] {
        return phase_linear_probe(mc, adapted, probe_training_set(mc, adapted, d)).checkpoint;
      });
      const EvalResult target = in_phase(tag + ".eval", info, [&] { return evaluate(tprobe, d.target_test); });
      const EvalResult after = in_phase(tag + ".eval", info, [&] { return evaluate(tprobe, d.source_test, &common); });
      w.add({name, "adapt", "target", subset, c.seed, target.accuracy, before.accuracy - after.accuracy}, target);
    }
  }

  if (s == Scenario::Adaptation && c.target_only) {
    PipelineConfig tc = c;
    tc.method = Method::Ce;
    for (const std::string& subset : kAdaptationGrid) {
      const std::string tag = "target_only." + subset;
      const vision::Checkpoint probed = in_phase(tag, info, [&] {
        const data::LabeledDataset ds = make_subset(d.target_pool, subset, phase_seed(tc, Phase::Subset, fnv1a64(subset)));
        Model m = init_model(tc, Method::Ce, ds.label_names.size(), phase_seed(tc, Phase::TargetOnly, fnv1a64(subset)));
        m.classifier_labels = ds.label_names;
        const TrainSpec spec{Method::Ce, tc.adapt_epochs, tc.batch, tc.adaptation_lr(), false,
                             tc.tau, tc.augment, phase_seed(tc, Phase::TargetOnly, fnv1a64(subset) + 1)};
        const auto rows = train_model(m, ds, nullptr, spec);
        fs::create_directories(out_dir / "target_only");
        std::string file = "adapt_" + subset + "_loss.csv";
        std::replace(file.begin(), file.end(), '%', 'p');
        write_text_file(out_dir / "target_only" / file, loss_csv(rows));
        return phase_linear_probe(tc, to_checkpoint(m), ds).checkpoint;
      });
      const EvalResult e = in_phase(tag + ".eval", info, [&] { return evaluate(probed, d.target_test); });
      w.add({"target_only", "adapt", "target", subset, c.seed, e.accuracy, std::nullopt}, e);
    }
  }

  report.metrics = w.rows;
  write_text_file(out_dir / "metrics.csv", metrics_csv(w.rows));
  write_text_file(out_dir / "per_class.csv", w.per_class);
  write_text_file(out_dir / "config.txt", c.to_text());
  write_text_file(out_dir / "summary.csv", summarize(w.rows));
  std::string timings;
  for (const auto& [k, v] : info)
    if (k.rfind("time.", 0) == 0) timings += k.substr(5) + "=" + v + "\n";
  write_text_file(out_dir / "timings.txt", timings);
  std::string manifest;
  for (const auto& [k, v] : info)
    if (k.rfind("time.", 0) != 0) manifest += k + "=" + v + "\n";
  write_text_file(out_dir / "report.txt", manifest);
  return report;
}

}  // namespace kgnn::pipeline

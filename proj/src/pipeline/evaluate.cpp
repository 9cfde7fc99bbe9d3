#include <algorithm>

#include "kgnn/error.hpp"
#include "kgnn/pipeline.hpp"

namespace kgnn::pipeline {

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

long index_in(const std::vector<std::string>& v, const std::string& x) {
  auto it = std::find(v.begin(), v.end(), x);
  return it == v.end() ? -1 : static_cast<long>(it - v.begin());
}

}  // namespace

EvalResult evaluate(const vision::Checkpoint& ckpt, const data::LabeledDataset& ds,
                    const std::vector<std::string>* class_filter) {
  if (!ckpt.encoder || !ckpt.probe) throw FormatError("evaluation needs a checkpoint with an encoder and a probe");
  auto it = ckpt.metadata.find("probe.labels");
  if (it == ckpt.metadata.end()) throw FormatError("checkpoint metadata has no probe.labels");
  const std::vector<std::string> probe_labels = split(it->second);
  if (probe_labels.size() != ckpt.probe->class_count())
    throw FormatError("probe.labels lists " + std::to_string(probe_labels.size()) + " classes, probe has " +
                      std::to_string(ckpt.probe->class_count()));

  EvalResult r;
  r.labels = class_filter ? *class_filter : probe_labels;
  if (r.labels.empty()) throw MappingError("class filter is empty");
  std::vector<std::size_t> columns;
  for (const std::string& name : r.labels) {
    const long col = index_in(probe_labels, name);
    if (col < 0) throw MappingError("class '" + name + "' is unknown to the probe");
    if (class_filter && index_in(ds.label_names, name) < 0) throw MappingError("class '" + name + "' is unknown to the dataset");
    columns.push_back(static_cast<std::size_t>(col));
  }
  // Dataset label id -> position in r.labels, or -1 when filtered out.
  std::vector<long> slot(ds.label_names.size(), -1);
  for (std::size_t l = 0; l < ds.label_names.size(); ++l) {
    slot[l] = index_in(r.labels, ds.label_names[l]);
    if (slot[l] < 0 && !class_filter && !ds.by_class()[l].empty())
      throw MappingError("dataset class '" + ds.label_names[l] + "' is unknown to the probe");
  }

  const Tensor logits = vision::probe_logits(*ckpt.probe, encode_dataset(*ckpt.encoder, ds));
  std::vector<std::size_t> hits(r.labels.size(), 0), totals(r.labels.size(), 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const long truth = slot[ds.labels[i]];
    if (truth < 0) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < columns.size(); ++k)
      if (logits.at(i, columns[k]) > logits.at(i, columns[best])) best = k;
    ++totals[static_cast<std::size_t>(truth)];
    if (best == static_cast<std::size_t>(truth)) {
      ++hits[best];
      ++correct;
    }
    ++r.count;
  }
  if (r.count == 0) throw SamplingError("no images to evaluate");
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
  for (std::size_t k = 0; k < r.labels.size(); ++k)
    r.per_class.push_back(totals[k] ? static_cast<double>(hits[k]) / static_cast<double>(totals[k]) : 0.0);
  return r;
}

}  // namespace kgnn::pipeline

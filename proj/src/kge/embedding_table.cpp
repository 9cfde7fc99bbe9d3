#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>

#include "kgnn/error.hpp"
#include "kgnn/kge.hpp"

namespace kgnn::kge {

void ClassEmbeddingTable::insert(const std::string& label, const Tensor& vector) {
  if (label.empty()) throw MappingError("class label must be non-empty");
  if (index_.count(label)) throw MappingError("duplicate class label '" + label + "'");
  if (dim_ == 0) dim_ = vector.numel();
  if (vector.numel() != dim_)
    throw DimensionError("embedding for '" + label + "' has " + std::to_string(vector.numel()) +
                         " values, table dim is " + std::to_string(dim_));
  Tensor v = vector.reshaped({dim_});
  double n2 = 0;
  for (double x : v.data()) n2 += x * x;
  // Vectors already unit up to rounding are kept as is, so a written table reads back bit-exactly.
  if (std::abs(n2 - 1.0) > 8 * std::numeric_limits<double>::epsilon()) v = l2_normalize(v);
  vectors_.push_back(std::move(v));
  index_.emplace(label, labels_.size());
  labels_.push_back(label);
}

const Tensor& ClassEmbeddingTable::at(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw MappingError("no class embedding for label '" + label + "'");
  return vectors_[it->second];
}

Tensor anchor_matrix(const ClassEmbeddingTable& table, const std::vector<std::string>& labels) {
  if (labels.empty()) throw MappingError("no labels to look up");
  Tensor out({labels.size(), table.dim()});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Tensor& v = table.at(labels[i]);
    std::copy(v.data().begin(), v.data().end(), out.ptr() + i * table.dim());
  }
  return out;
}

namespace {

kg::Iri linked_entity(const kg::KnowledgeGraph& kg, const std::string& label) {
  const auto hits = kg.entities_with_label(label);
  if (hits.empty()) throw MappingError("label '" + label + "' is not linked to any KG entity");
  if (hits.size() > 1) throw MappingError("label '" + label + "' is linked to " + std::to_string(hits.size()) + " entities");
  return hits.front();
}

}  // namespace

NodeLabels class_categories(const kg::KnowledgeGraph& kg, const RelationalAdjacency& adj,
                            const std::vector<std::string>& labels) {
  NodeLabels out;
  for (const std::string& label : labels) {
    const kg::Iri e = linked_entity(kg, label);
    std::vector<kg::Triple> types;
    for (std::size_t i : kg.with_subject(e.value)) {
      const kg::Triple& t = kg.triples()[i];
      const auto* o = std::get_if<kg::Iri>(&t.object);
      if (t.predicate.value == kg::kRdfType && o && o->value != kg::kRdfsClass) types.push_back(t);
    }
    if (types.empty()) throw MappingError("class entity <" + e.value + "> has no category type");
    std::sort(types.begin(), types.end(), kg::canonical_less);
    const std::string& cat = std::get<kg::Iri>(types.front().object).value;
    auto it = std::find(out.categories.begin(), out.categories.end(), cat);
    if (it == out.categories.end()) it = out.categories.insert(out.categories.end(), cat);
    out.targets[adj.index_of(e)] = static_cast<std::size_t>(it - out.categories.begin());
  }
  return out;
}

ClassEmbeddingTable extract_class_embeddings(const KgeModel& model, const RelationalAdjacency& adj,
                                             const Tensor& features, const kg::KnowledgeGraph& kg,
                                             const std::vector<std::string>& labels) {
  const Tensor h = node_embeddings(model, adj, features);
  ClassEmbeddingTable table(h.dim(1));
  for (const std::string& label : labels) table.insert(label, h.row(adj.index_of(linked_entity(kg, label))));
  return table;
}

std::string export_embedding_file(const ClassEmbeddingTable& table) {
  std::string out = std::to_string(table.dim()) + " " + std::to_string(table.size()) + "\n";
  char buf[64];
  for (const std::string& label : table.labels()) {
    out += label;
    for (double v : table.at(label).data()) {
      auto r = std::to_chars(buf, buf + sizeof buf, v);
      out += ' ';
      out.append(buf, r.ptr);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t s = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > s) f.push_back(line.substr(s, i - s));
  }
  return f;
}

template <class T>
T parse_number(std::string_view s, std::size_t line_no, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError(line_no, 1, std::string("invalid ") + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

ClassEmbeddingTable import_embedding_file(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw ParseError(1, 1, "empty embedding file");
  const auto head = split_ws(lines[0]);
  if (head.size() != 2) throw ParseError(1, 1, "header must be 'dim count'");
  const auto dim = parse_number<std::size_t>(head[0], 1, "dimension");
  const auto count = parse_number<std::size_t>(head[1], 1, "count");
  if (dim == 0) throw ParseError(1, 1, "dimension must be positive");

  ClassEmbeddingTable table(dim);
  std::size_t seen = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_ws(lines[i]);
    if (f.empty()) continue;
    if (f.size() != dim + 1)
      throw ParseError(i + 1, 1, "expected label and " + std::to_string(dim) + " values, got " +
                                     std::to_string(f.size() - 1));
    Tensor v({dim});
    for (std::size_t j = 0; j < dim; ++j) v[j] = parse_number<double>(f[j + 1], i + 1, "value");
    try {
      table.insert(std::string(f[0]), v);
    } catch (const Error& e) {
      throw ParseError(i + 1, 1, e.what());
    }
    ++seen;
  }
  if (seen != count)
    throw ParseError(lines.size(), 1, "header declares " + std::to_string(count) + " rows, found " + std::to_string(seen));
  return table;
}

ClusterDiagnostics cluster_diagnostics(const ClassEmbeddingTable& table,
                                       const std::map<std::string, std::string>& category_of) {
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  const auto& labels = table.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const auto ci = category_of.find(labels[i]), cj = category_of.find(labels[j]);
      if (ci == category_of.end() || cj == category_of.end()) continue;
      const auto a = table.at(labels[i]).data(), b = table.at(labels[j]).data();
      double cos = 0;
      for (std::size_t k = 0; k < a.size(); ++k) cos += a[k] * b[k];
      if (ci->second == cj->second) {
        intra += cos;
        ++n_intra;
      } else {
        inter += cos;
        ++n_inter;
      }
    }
  }
  ClusterDiagnostics d;
  if (n_intra) d.intra_mean = intra / static_cast<double>(n_intra);
  if (n_inter) d.inter_mean = inter / static_cast<double>(n_inter);
  return d;
}

}  // namespace kgnn::kge

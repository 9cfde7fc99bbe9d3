#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "kgnn/error.hpp"
#include "kgnn/kge.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::kge {

std::size_t RelationalAdjacency::index_of(const kg::Iri& iri) const {
  auto it = node_index.find(iri.value);
  if (it == node_index.end()) throw LookupError("entity <" + iri.value + "> is not a graph node");
  return it->second;
}

std::size_t RelationalAdjacency::relation_id(std::string_view name) const {
  auto it = std::find(relations.begin(), relations.end(), name);
  if (it == relations.end()) throw LookupError("unknown relation " + std::string(name));
  return static_cast<std::size_t>(it - relations.begin());
}

RelationalAdjacency build_adjacency(const kg::KnowledgeGraph& kg) {
  RelationalAdjacency adj;
  adj.nodes = kg.entities();
  for (std::size_t i = 0; i < adj.nodes.size(); ++i) adj.node_index.emplace(adj.nodes[i].value, i);

  std::set<std::string> object_predicates;
  for (const kg::Triple& t : kg.triples())
    if (std::holds_alternative<kg::Iri>(t.object)) object_predicates.insert(t.predicate.value);

  std::unordered_map<std::string, std::size_t> forward_id;
  for (const std::string& p : object_predicates) {
    forward_id[p] = adj.relations.size();
    adj.relations.push_back(p);
    adj.relations.push_back(p + std::string(kInverseSuffix));
  }
  adj.relations.emplace_back(kSelfRelation);
  adj.edges.resize(adj.relations.size());

  for (const kg::Triple& t : kg.triples()) {
    const kg::Iri* o = std::get_if<kg::Iri>(&t.object);
    if (!o) continue;
    const std::size_t r = forward_id.at(t.predicate.value);
    const std::size_t s = adj.node_index.at(t.subject.value);
    const std::size_t d = adj.node_index.at(o->value);
    adj.edges[r].emplace_back(s, d);
    adj.edges[r + 1].emplace_back(d, s);
  }
  for (std::size_t v = 0; v < adj.nodes.size(); ++v) adj.edges.back().emplace_back(v, v);

  const std::size_t n = adj.nodes.size();
  for (const auto& list : adj.edges) {
    std::vector<std::vector<std::size_t>> rows(n);
    for (const auto& [node, nb] : list) rows[node].push_back(nb);
    auto m = std::make_shared<SparseMatrix>();
    m->rows = n;
    m->cols = n;
    m->row_ptr.push_back(0);
    for (const auto& row : rows) {
      for (std::size_t nb : row) {
        m->col_idx.push_back(nb);
        m->values.push_back(1.0 / static_cast<double>(row.size()));
      }
      m->row_ptr.push_back(m->col_idx.size());
    }
    adj.normalized.push_back(std::move(m));
  }
  return adj;
}

std::vector<std::string> literal_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Tensor literal_features(const kg::KnowledgeGraph& kg, const RelationalAdjacency& adj, std::size_t feature_dim) {
  if (feature_dim < 2) throw ConfigError("feature dimension must be at least 2");
  const std::size_t buckets = feature_dim - 1;
  Tensor x({adj.node_count(), feature_dim});
  for (std::size_t v = 0; v < adj.node_count(); ++v) {
    double* row = x.ptr() + v * feature_dim;
    for (std::size_t i : kg.with_subject(adj.nodes[v].value)) {
      const auto* lit = std::get_if<kg::Literal>(&kg.triples()[i].object);
      if (!lit) continue;
      for (const std::string& tok : literal_tokens(lit->lexical)) row[fnv1a64(tok) % buckets] += 1.0;
    }
    double mx = 0;
    for (std::size_t j = 0; j < buckets; ++j) mx = std::max(mx, std::abs(row[j]));
    if (mx > 0)
      for (std::size_t j = 0; j < buckets; ++j) row[j] /= mx;
    row[buckets] = 1.0;
  }
  return x;
}

GraphInputs build_graph_inputs(const kg::KnowledgeGraph& kg, std::size_t feature_dim) {
  if (kg.empty()) throw ConfigError("cannot build graph inputs from an empty knowledge graph");
  GraphInputs in;
  in.adjacency = build_adjacency(kg);
  in.features = literal_features(kg, in.adjacency, feature_dim);
  return in;
}

}  // namespace kgnn::kge

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgnn/kg.hpp"
#include "kgnn/tape.hpp"
#include "kgnn/tensor.hpp"

namespace kgnn::kge {

inline constexpr std::string_view kSelfRelation = "self";
inline constexpr std::string_view kInverseSuffix = "^-1";

/// Multi-relational graph over all KG entities. For every IRI-object triple
/// (s, p, o) relation p lists the edge (s, o), meaning o is a neighbor of s,
/// and relation p^-1 lists (o, s). The self relation lists (v, v) for every node.
struct RelationalAdjacency {
  std::vector<kg::Iri> nodes;
  std::unordered_map<std::string, std::size_t> node_index;
  std::vector<std::string> relations;
  /// edges[r] = (node, neighbor) pairs in KG insertion order.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;
  /// Row-normalized adjacency per relation: A_r[v][u] = 1 / |N_r(v)|.
  std::vector<std::shared_ptr<const SparseMatrix>> normalized;

  std::size_t node_count() const noexcept { return nodes.size(); }
  std::size_t relation_count() const noexcept { return relations.size(); }
  std::size_t index_of(const kg::Iri& iri) const;
  std::size_t relation_id(std::string_view name) const;
};

inline constexpr std::size_t kDefaultFeatureDim = 64;

/// Entity features from literal tokens: tokens (lowercased, split on
/// non-alphanumerics) are FNV-1a hashed into the first d_f - 1 columns as
/// counts, the row's hashed part is scaled to max-abs 1, and the last column
/// is a constant 1 bias.
Tensor literal_features(const kg::KnowledgeGraph& kg, const RelationalAdjacency& adj,
                        std::size_t feature_dim = kDefaultFeatureDim);

/// Tokenization used by literal_features.
std::vector<std::string> literal_tokens(std::string_view text);

RelationalAdjacency build_adjacency(const kg::KnowledgeGraph& kg);

struct GraphInputs {
  RelationalAdjacency adjacency;
  Tensor features;
};

/// Adjacency and literal features together; kg must be non-empty.
GraphInputs build_graph_inputs(const kg::KnowledgeGraph& kg, std::size_t feature_dim = kDefaultFeatureDim);

struct KgeConfig {
  std::size_t hidden_dim = 64;
  std::size_t embedding_dim = 32;
  std::size_t epochs = 200;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

/// Two relational graph layers and a linear node classifier.
///   h1 = ReLU(sum_r A_r X W1_r),  h2 = sum_r A_r h1 W2_r,  logits = h2 C
struct KgeModel {
  std::vector<Tensor> layer1;  // per relation [d_f x d_h]
  std::vector<Tensor> layer2;  // per relation [d_h x d_P]
  Tensor classifier;           // [d_P x n_categories]
  std::vector<std::string> categories;
  std::vector<double> loss_history;

  std::size_t embedding_dim() const { return classifier.dim(0); }
};

/// Node classification targets: node index -> category index.
struct NodeLabels {
  std::vector<std::string> categories;
  std::map<std::size_t, std::size_t> targets;
};

KgeModel init_model(const RelationalAdjacency& adj, std::size_t feature_dim, std::size_t n_categories,
                    const KgeConfig& config);

/// Full-batch Adam on softmax cross-entropy over labeled nodes.
/// Throws ConfigError for fewer than 2 categories, LookupError for unknown nodes.
KgeModel train_node_classifier(const RelationalAdjacency& adj, const Tensor& features, const NodeLabels& labels,
                               const KgeConfig& config);

/// Second-layer activations (pre-classifier), one row per node.
Tensor node_embeddings(const KgeModel& model, const RelationalAdjacency& adj, const Tensor& features);
Tensor node_logits(const KgeModel& model, const RelationalAdjacency& adj, const Tensor& features);

/// Label -> unit-norm vector, in insertion order.
class ClassEmbeddingTable {
 public:
  ClassEmbeddingTable() = default;
  explicit ClassEmbeddingTable(std::size_t dim) : dim_(dim) {}

  /// Normalizes `vector` and stores it. Throws MappingError on a duplicate
  /// label, DimensionError on a length mismatch, DegenerateVectorError on a
  /// zero vector.
  void insert(const std::string& label, const Tensor& vector);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool contains(const std::string& label) const { return index_.count(label) > 0; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  /// Throws MappingError naming the label when absent.
  const Tensor& at(const std::string& label) const;

  friend bool operator==(const ClassEmbeddingTable& a, const ClassEmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.labels_ == b.labels_ && a.vectors_ == b.vectors_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> labels_;
  std::vector<Tensor> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Stacks the vectors for `labels` as rows, in order. Throws MappingError
/// naming the first missing label.
Tensor anchor_matrix(const ClassEmbeddingTable& table, const std::vector<std::string>& labels);

/// Reads the linked entity for every label and returns normalized
/// second-layer activations. Throws MappingError for a label linked to zero or
/// several entities.
ClassEmbeddingTable extract_class_embeddings(const KgeModel& model, const RelationalAdjacency& adj,
                                             const Tensor& features, const kg::KnowledgeGraph& kg,
                                             const std::vector<std::string>& labels);

/// Category of every linked class entity: its rdf:type object other than
/// rdfs:Class (first in canonical order). Throws MappingError if a label is
/// unlinked or has no type.
NodeLabels class_categories(const kg::KnowledgeGraph& kg, const RelationalAdjacency& adj,
                            const std::vector<std::string>& labels);

/// Embedding file: first line `d n`, then n lines `label v1 ... vd`.
ClassEmbeddingTable import_embedding_file(std::string_view text);
std::string export_embedding_file(const ClassEmbeddingTable& table);

struct ClusterDiagnostics {
  double intra_mean = 0;
  double inter_mean = 0;
  double margin() const { return intra_mean - inter_mean; }
};

/// Mean pairwise cosine between distinct labels of the same category and of
/// different categories.
ClusterDiagnostics cluster_diagnostics(const ClassEmbeddingTable& table,
                                       const std::map<std::string, std::string>& category_of);

}  // namespace kgnn::kge

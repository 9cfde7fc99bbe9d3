#include <memory>

#include "kgnn/error.hpp"
#include "kgnn/kge.hpp"
#include "kgnn/optim.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::kge {
namespace {

struct BoundModel {
  std::vector<Var> layer1, layer2;
  Var classifier;
};

BoundModel bind(Tape& t, const KgeModel& m, bool trainable) {
  auto leaf = [&](const Tensor& x) { return trainable ? t.parameter(x) : t.constant(x); };
  BoundModel b;
  for (const Tensor& w : m.layer1) b.layer1.push_back(leaf(w));
  for (const Tensor& w : m.layer2) b.layer2.push_back(leaf(w));
  b.classifier = leaf(m.classifier);
  return b;
}

/// sum_r A_r H W_r
Var relational_layer(Tape& t, const RelationalAdjacency& adj, Var h, const std::vector<Var>& weights) {
  Var acc{};
  for (std::size_t r = 0; r < adj.relation_count(); ++r) {
    const Var msg = ops::matmul(t, ops::sparse_matmul(t, adj.normalized[r], h), weights[r]);
    acc = r == 0 ? msg : ops::add(t, acc, msg);
  }
  return acc;
}

Var forward_embeddings(Tape& t, const RelationalAdjacency& adj, Var x, const BoundModel& b) {
  const Var h1 = ops::relu(t, relational_layer(t, adj, x, b.layer1));
  return relational_layer(t, adj, h1, b.layer2);
}

void check_shapes(const KgeModel& m, const RelationalAdjacency& adj, const Tensor& features) {
  if (m.layer1.size() != adj.relation_count() || m.layer2.size() != adj.relation_count())
    throw DimensionError("KGE model has " + std::to_string(m.layer1.size()) + " relations, graph has " +
                         std::to_string(adj.relation_count()));
  if (features.rank() != 2 || features.dim(0) != adj.node_count())
    throw DimensionError("feature matrix " + shape_to_string(features.shape()) + " does not match " +
                         std::to_string(adj.node_count()) + " nodes");
  if (m.layer1.front().dim(0) != features.dim(1))
    throw DimensionError("feature dim " + std::to_string(features.dim(1)) + " does not match model input " +
                         std::to_string(m.layer1.front().dim(0)));
}

}  // namespace

KgeModel init_model(const RelationalAdjacency& adj, std::size_t feature_dim, std::size_t n_categories,
                    const KgeConfig& config) {
  if (config.hidden_dim == 0 || config.embedding_dim == 0) throw ConfigError("KGE dims must be positive");
  Rng rng(derive_seed(config.seed, 0x6b6765));
  KgeModel m;
  for (std::size_t r = 0; r < adj.relation_count(); ++r)
    m.layer1.push_back(Tensor::glorot({feature_dim, config.hidden_dim}, feature_dim, config.hidden_dim, rng));
  for (std::size_t r = 0; r < adj.relation_count(); ++r)
    m.layer2.push_back(Tensor::glorot({config.hidden_dim, config.embedding_dim}, config.hidden_dim,
                                      config.embedding_dim, rng));
  m.classifier = Tensor::glorot({config.embedding_dim, n_categories}, config.embedding_dim, n_categories, rng);
  return m;
}

KgeModel train_node_classifier(const RelationalAdjacency& adj, const Tensor& features, const NodeLabels& labels,
                               const KgeConfig& config) {
  if (labels.categories.size() < 2)
    throw ConfigError("node classification needs at least 2 categories, got " +
                      std::to_string(labels.categories.size()));
  if (labels.targets.empty()) throw ConfigError("node classification needs labeled nodes");
  for (const auto& [node, cat] : labels.targets) {
    if (node >= adj.node_count()) throw LookupError("labeled node " + std::to_string(node) + " is not in the graph");
    if (cat >= labels.categories.size()) throw ConfigError("category index out of range");
  }

  KgeModel model = init_model(adj, features.dim(1), labels.categories.size(), config);
  model.categories = labels.categories;
  check_shapes(model, adj, features);
  if (config.epochs == 0) return model;

  // Constant CE pieces: mask of ones for logsumexp on labeled rows, and weights
  // that pick -logit[target] / n_labeled.
  const std::size_t n = adj.node_count(), c = labels.categories.size();
  const double inv = 1.0 / static_cast<double>(labels.targets.size());
  auto lse_mask = std::make_shared<Tensor>(Tensor::full({n, c}, 1.0));
  auto lse_weight = std::make_shared<Tensor>(Tensor::zeros({n}));
  auto pick = std::make_shared<Tensor>(Tensor::zeros({n, c}));
  for (const auto& [node, cat] : labels.targets) {
    (*lse_weight)[node] = inv;
    (*pick)[node * c + cat] = -inv;
  }

  Optimizer opt = Optimizer::adam(config.lr);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tape t;
    const BoundModel b = bind(t, model, true);
    const Var x = t.constant(features);
    const Var logits = ops::matmul(t, forward_embeddings(t, adj, x, b), b.classifier);
    const Var loss = ops::add(t, ops::weighted_sum(t, ops::masked_logsumexp_rows(t, logits, lse_mask), lse_weight),
                              ops::weighted_sum(t, logits, pick));
    model.loss_history.push_back(t.value(loss).item());
    const Gradients g = backward(t, loss);

    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
    for (std::size_t r = 0; r < model.layer1.size(); ++r) {
      params.push_back(&model.layer1[r]);
      grads.push_back(&g.of(b.layer1[r]));
    }
    for (std::size_t r = 0; r < model.layer2.size(); ++r) {
      params.push_back(&model.layer2[r]);
      grads.push_back(&g.of(b.layer2[r]));
    }
    params.push_back(&model.classifier);
    grads.push_back(&g.of(b.classifier));
    opt.step(params, grads);
  }
  return model;
}

Tensor node_embeddings(const KgeModel& model, const RelationalAdjacency& adj, const Tensor& features) {
  check_shapes(model, adj, features);
  Tape t;
  const BoundModel b = bind(t, model, false);
  return t.value(forward_embeddings(t, adj, t.constant(features), b));
}

Tensor node_logits(const KgeModel& model, const RelationalAdjacency& adj, const Tensor& features) {
  return matmul(node_embeddings(model, adj, features), model.classifier);
}

}  // namespace kgnn::kge

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kgnn/error.hpp"
#include "kgnn/kge.hpp"
#include "kgnn/rng.hpp"
#include "kgnn/serialize.hpp"

using namespace kgnn;
using namespace kgnn::kge;

namespace {

const std::string kFixture = std::string(KGNN_TEST_DATA_DIR) + "/roadsign.nt";

std::vector<std::string> fixture_labels() {
  std::ifstream in(std::string(KGNN_TEST_DATA_DIR) + "/roadsign_labels.txt");
  std::vector<std::string> out;
  for (std::string s; in >> s;) out.push_back(s);
  return out;
}

std::map<std::string, std::string> category_map(const kg::KnowledgeGraph& kg, const RelationalAdjacency& adj,
                                                const std::vector<std::string>& labels) {
  const NodeLabels nl = class_categories(kg, adj, labels);
  std::map<std::string, std::string> out;
  for (const std::string& l : labels)
    out[l] = nl.categories[nl.targets.at(adj.index_of(kg.entities_with_label(l).front()))];
  return out;
}

ClassEmbeddingTable train_fixture(const kg::KnowledgeGraph& kg, std::uint64_t seed) {
  const auto labels = fixture_labels();
  const GraphInputs in = build_graph_inputs(kg);
  KgeConfig cfg;
  cfg.seed = seed;
  const KgeModel m = train_node_classifier(in.adjacency, in.features, class_categories(kg, in.adjacency, labels), cfg);
  return extract_class_embeddings(m, in.adjacency, in.features, kg, labels);
}

std::vector<double> sorted_cosines(const ClassEmbeddingTable& t) {
  std::vector<double> c;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      const auto a = t.at(t.labels()[i]).data(), b = t.at(t.labels()[j]).data();
      double s = 0;
      for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
      c.push_back(s);
    }
  std::sort(c.begin(), c.end());
  return c;
}

}  // namespace

TEST(GraphInputs, SingleTriple) {
  const auto kg = kg::parse_triples("<a> <p> <b> .");
  const GraphInputs in = build_graph_inputs(kg);
  const auto& adj = in.adjacency;
  EXPECT_EQ(adj.relations, (std::vector<std::string>{"p", "p^-1", "self"}));
  const std::size_t a = adj.index_of(kg::Iri{"a"}), b = adj.index_of(kg::Iri{"b"});
  EXPECT_EQ(adj.edges[0], (std::vector<std::pair<std::size_t, std::size_t>>{{a, b}}));
  EXPECT_EQ(adj.edges[1], (std::vector<std::pair<std::size_t, std::size_t>>{{b, a}}));
  EXPECT_EQ(adj.edges[2], (std::vector<std::pair<std::size_t, std::size_t>>{{a, a}, {b, b}}));
  // No literals: bias column only.
  for (std::size_t v = 0; v < 2; ++v)
    for (std::size_t j = 0; j < kDefaultFeatureDim; ++j)
      EXPECT_EQ(in.features.at(v, j), j + 1 == kDefaultFeatureDim ? 1.0 : 0.0);
}

TEST(GraphInputs, SingleTokenLiteral) {
  const auto kg = kg::parse_triples("<s> <p:label> \"Stop\"^^string .\n<s> <p> <t> .");
  const GraphInputs in = build_graph_inputs(kg);
  const std::size_t s = in.adjacency.index_of(kg::Iri{"s"});
  std::size_t nonzero = 0;
  for (std::size_t j = 0; j + 1 < kDefaultFeatureDim; ++j) nonzero += in.features.at(s, j) != 0.0;
  EXPECT_EQ(nonzero, 1u);
  EXPECT_EQ(in.features.at(s, fnv1a64(std::string_view("stop")) % (kDefaultFeatureDim - 1)), 1.0);
  EXPECT_EQ(in.features.at(s, kDefaultFeatureDim - 1), 1.0);
}

TEST(GraphInputs, TokenizationAndScaling) {
  EXPECT_EQ(literal_tokens("Stop-Sign  no.2"), (std::vector<std::string>{"stop", "sign", "no", "2"}));
  const auto kg = kg::parse_triples("<s> <l> \"go go go stop\"^^string .");
  const GraphInputs in = build_graph_inputs(kg);
  double mx = 0;
  for (std::size_t j = 0; j + 1 < kDefaultFeatureDim; ++j) mx = std::max(mx, in.features.at(0, j));
  EXPECT_EQ(mx, 1.0);
  EXPECT_DOUBLE_EQ(in.features.at(0, fnv1a64(std::string_view("stop")) % (kDefaultFeatureDim - 1)), 1.0 / 3.0);
}

TEST(GraphInputs, EmptyGraphRejected) {
  EXPECT_THROW(build_graph_inputs(kg::KnowledgeGraph{}), ConfigError);
}

TEST(GraphInputs, FixtureEdgeCountsMatchPredicateFrequencies) {
  const auto kg = kg::load_triples_file(kFixture);
  const auto adj = build_adjacency(kg);
  for (const kg::Iri& p : kg.predicates()) {
    std::size_t iri_objects = 0;
    for (std::size_t i : kg.with_predicate(p.value)) iri_objects += std::holds_alternative<kg::Iri>(kg.triples()[i].object);
    if (iri_objects == 0) {
      EXPECT_THROW(adj.relation_id(p.value), LookupError);
      continue;
    }
    EXPECT_EQ(adj.edges[adj.relation_id(p.value)].size(), iri_objects) << p.value;
    EXPECT_EQ(adj.edges[adj.relation_id(p.value + "^-1")].size(), iri_objects) << p.value;
  }
  EXPECT_EQ(adj.edges[adj.relation_id("self")].size(), adj.node_count());
}

TEST(GraphInputs, EveryForwardEdgeHasOneInverse) {
  const auto adj = build_adjacency(kg::load_triples_file(kFixture));
  for (std::size_t r = 0; r + 1 < adj.relation_count(); r += 2) {
    auto fwd = adj.edges[r];
    auto inv = adj.edges[r + 1];
    for (auto& e : inv) std::swap(e.first, e.second);
    std::sort(fwd.begin(), fwd.end());
    std::sort(inv.begin(), inv.end());
    EXPECT_EQ(fwd, inv);
    for (const auto& [u, v] : fwd) {
      EXPECT_LT(u, adj.node_count());
      EXPECT_LT(v, adj.node_count());
    }
  }
}

TEST(GraphInputs, NormalizedRowsSumToOne) {
  const auto adj = build_adjacency(kg::load_triples_file(kFixture));
  for (const auto& m : adj.normalized)
    for (std::size_t r = 0; r < m->rows; ++r) {
      if (m->row_ptr[r] == m->row_ptr[r + 1]) continue;
      double s = 0;
      for (std::size_t k = m->row_ptr[r]; k < m->row_ptr[r + 1]; ++k) s += m->values[k];
      EXPECT_NEAR(s, 1.0, 1e-15);
    }
}

TEST(TrainNodeClassifier, LayerRuleMatchesExplicitSum) {
  // Oracle: h'(v) = sum_r sum_{u in N_r(v)} W_r^T h(u) / |N_r(v)|, written with loops.
  const auto kg = kg::parse_triples("<a> <p> <b> .\n<a> <p> <c> .\n<c> <q> <a> .\n<b> <l> \"x y\"^^string .");
  const GraphInputs in = build_graph_inputs(kg, 5);
  const auto& adj = in.adjacency;
  KgeConfig cfg;
  cfg.hidden_dim = 4;
  cfg.embedding_dim = 3;
  cfg.seed = 9;
  const KgeModel m = init_model(adj, 5, 2, cfg);
  auto layer = [&](const Tensor& h, const std::vector<Tensor>& w, bool relu) {
    const std::size_t d = w[0].dim(1);
    Tensor out({adj.node_count(), d});
    for (std::size_t v = 0; v < adj.node_count(); ++v)
      for (std::size_t r = 0; r < adj.relation_count(); ++r) {
        std::vector<std::size_t> nbrs;
        for (const auto& [x, u] : adj.edges[r])
          if (x == v) nbrs.push_back(u);
        for (std::size_t u : nbrs)
          for (std::size_t o = 0; o < d; ++o) {
            double s = 0;
            for (std::size_t i = 0; i < h.dim(1); ++i) s += h.at(u, i) * w[r].at(i, o);
            out.ptr()[v * d + o] += s / static_cast<double>(nbrs.size());
          }
      }
    if (relu)
      for (double& x : out.data()) x = std::max(x, 0.0);
    return out;
  };
  const Tensor expect = layer(layer(in.features, m.layer1, true), m.layer2, false);
  const Tensor got = node_embeddings(m, adj, in.features);
  ASSERT_EQ(got.shape(), expect.shape());
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
}

TEST(TrainNodeClassifier, FewerThanTwoCategories) {
  const auto kg = kg::parse_triples("<a> <p> <b> .");
  const GraphInputs in = build_graph_inputs(kg);
  NodeLabels one{{"c"}, {{0, 0}}};
  EXPECT_THROW(train_node_classifier(in.adjacency, in.features, one, {}), ConfigError);
}

TEST(TrainNodeClassifier, ZeroEpochsEqualsInit) {
  const auto kg = kg::parse_triples("<a> <p> <b> .\n<c> <p> <d> .");
  const GraphInputs in = build_graph_inputs(kg);
  KgeConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 4;
  const KgeModel trained = train_node_classifier(in.adjacency, in.features, {{"x", "y"}, {{0, 0}, {2, 1}}}, cfg);
  const KgeModel init = init_model(in.adjacency, in.features.dim(1), 2, cfg);
  EXPECT_EQ(trained.layer1, init.layer1);
  EXPECT_EQ(trained.layer2, init.layer2);
  EXPECT_EQ(trained.classifier, init.classifier);
}

TEST(TrainNodeClassifier, DisconnectedComponentsLossDecreases) {
  const auto kg = kg::parse_triples(
      "<a1> <p> <a2> .\n<a2> <p> <a3> .\n<a1> <l> \"red round\"^^string .\n"
      "<b1> <q> <b2> .\n<b2> <q> <b3> .\n<b1> <l> \"blue square\"^^string .");
  const GraphInputs in = build_graph_inputs(kg);
  const auto& adj = in.adjacency;
  NodeLabels labels{{"A", "B"}, {}};
  for (const char* n : {"a1", "a2", "a3"}) labels.targets[adj.index_of(kg::Iri{n})] = 0;
  for (const char* n : {"b1", "b2", "b3"}) labels.targets[adj.index_of(kg::Iri{n})] = 1;
  KgeConfig cfg;
  cfg.epochs = 10;
  const KgeModel m = train_node_classifier(adj, in.features, labels, cfg);
  ASSERT_EQ(m.loss_history.size(), 10u);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_LT(m.loss_history[i], m.loss_history[i - 1]) << i;
}

TEST(TrainNodeClassifier, SeparableToyGraphReachesFullAccuracy) {
  std::string text;
  NodeLabels labels{{"hot", "cold"}, {}};
  for (int i = 0; i < 6; ++i) {
    text += "<h" + std::to_string(i) + "> <type> <Hot> .\n";
    text += "<c" + std::to_string(i) + "> <type> <Cold> .\n";
  }
  text += "<Hot> <l> \"hot warm\"^^string .\n<Cold> <l> \"cold icy\"^^string .\n";
  const auto kg = kg::parse_triples(text);
  const GraphInputs in = build_graph_inputs(kg);
  for (int i = 0; i < 6; ++i) {
    labels.targets[in.adjacency.index_of(kg::Iri{"h" + std::to_string(i)})] = 0;
    labels.targets[in.adjacency.index_of(kg::Iri{"c" + std::to_string(i)})] = 1;
  }
  KgeConfig cfg;
  cfg.epochs = 50;
  const KgeModel m = train_node_classifier(in.adjacency, in.features, labels, cfg);
  const Tensor logits = node_logits(m, in.adjacency, in.features);
  for (const auto& [node, cat] : labels.targets) {
    const std::size_t pred = logits.at(node, 0) >= logits.at(node, 1) ? 0 : 1;
    EXPECT_EQ(pred, cat);
  }
}

TEST(ExtractClassEmbeddings, UnitNormAndDeterministic) {
  const auto kg = kg::load_triples_file(kFixture);
  const ClassEmbeddingTable a = train_fixture(kg, 3), b = train_fixture(kg, 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(a.dim(), 32u);
  for (const std::string& l : a.labels()) {
    double n = 0;
    for (double v : a.at(l).data()) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(ExtractClassEmbeddings, IdenticalNeighborhoodsGiveIdenticalVectors) {
  const auto kg = kg::parse_triples(
      "<x> <rdf:type> <K> .\n<y> <rdf:type> <K> .\n<x> <p> <w> .\n<y> <p> <w> .\n"
      "<z> <rdf:type> <J> .\n<K> <l> \"kay\"^^string .");
  const GraphInputs in = build_graph_inputs(kg);
  const auto& adj = in.adjacency;
  NodeLabels labels{{"K", "J"}, {{adj.index_of(kg::Iri{"x"}), 0}, {adj.index_of(kg::Iri{"y"}), 0}, {adj.index_of(kg::Iri{"z"}), 1}}};
  KgeConfig cfg;
  cfg.epochs = 20;
  const KgeModel m = train_node_classifier(adj, in.features, labels, cfg);
  const Tensor h = node_embeddings(m, adj, in.features);
  EXPECT_EQ(h.row(adj.index_of(kg::Iri{"x"})), h.row(adj.index_of(kg::Iri{"y"})));
}

TEST(ExtractClassEmbeddings, LabelLinkageErrors) {
  const auto kg = kg::parse_triples(
      "<a> <kgnn:classLabel> \"dup\"^^string .\n<b> <kgnn:classLabel> \"dup\"^^string .\n"
      "<a> <rdf:type> <K> .\n<b> <rdf:type> <J> .");
  const GraphInputs in = build_graph_inputs(kg);
  const KgeModel m = init_model(in.adjacency, in.features.dim(1), 2, {});
  try {
    extract_class_embeddings(m, in.adjacency, in.features, kg, {"dup"});
    FAIL();
  } catch (const MappingError& e) {
    EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
  }
  try {
    extract_class_embeddings(m, in.adjacency, in.features, kg, {"missing"});
    FAIL();
  } catch (const MappingError& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST(ExtractClassEmbeddings, FixtureClustersByCategory) {
  const auto kg = kg::load_triples_file(kFixture);
  const auto adj = build_adjacency(kg);
  const auto cats = category_map(kg, adj, fixture_labels());
  for (std::uint64_t seed : {1, 2, 3}) {
    const ClusterDiagnostics d = cluster_diagnostics(train_fixture(kg, seed), cats);
    EXPECT_GE(d.margin(), 0.2) << "seed " << seed << " intra " << d.intra_mean << " inter " << d.inter_mean;
  }
}

TEST(ExtractClassEmbeddings, IriRelabelingPreservesCosines) {
  const auto kg = kg::load_triples_file(kFixture);
  kg::KnowledgeGraph relabeled;
  auto rename = [](const kg::Iri& i) {
    if (i.value.rfind("rs:", 0) != 0) return i;
    return kg::Iri{"zz:" + std::to_string(fnv1a64(i.value))};
  };
  for (const kg::Triple& t : kg.triples()) {
    kg::Triple u{rename(t.subject), t.predicate, t.object};
    if (const auto* o = std::get_if<kg::Iri>(&t.object)) u.object = rename(*o);
    relabeled.add(u);
  }
  const auto a = sorted_cosines(train_fixture(kg, 5));
  const auto b = sorted_cosines(train_fixture(relabeled, 5));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(EmbeddingFile, ThreeFourFive) {
  const ClassEmbeddingTable t = import_embedding_file("2 1\nstop 3 4\n");
  EXPECT_EQ(t.at("stop"), Tensor::vector({0.6, 0.8}));
}

TEST(EmbeddingFile, RoundTrip) {
  const auto kg = kg::load_triples_file(kFixture);
  const ClassEmbeddingTable t = train_fixture(kg, 1);
  const std::string text = export_embedding_file(t);
  const ClassEmbeddingTable back = import_embedding_file(text);
  EXPECT_EQ(back, t);
  EXPECT_EQ(export_embedding_file(back), text);
}

TEST(EmbeddingFile, MalformedInputs) {
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"", 1},
      {"2\nstop 1 0\n", 1},
      {"x 1\nstop 1 0\n", 1},
      {"2 2\nstop 1 0\nstop 0 1\n", 3},
      {"2 1\nstop 1 0 5\n", 2},
      {"2 1\nstop 1\n", 2},
      {"2 1\nstop 1 abc\n", 2},
      {"2 1\nstop 0 0\n", 2},
      {"2 2\nstop 1 0\n", 2},
      {"0 0\n", 1},
  };
  for (const auto& [text, line] : cases) {
    try {
      import_embedding_file(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << text << " -> " << e.what();
    }
  }
}

TEST(ClassEmbeddingTable, Errors) {
  ClassEmbeddingTable t(2);
  t.insert("a", Tensor::vector({1, 1}));
  EXPECT_THROW(t.insert("a", Tensor::vector({1, 0})), MappingError);
  EXPECT_THROW(t.insert("b", Tensor::vector({1, 0, 0})), DimensionError);
  EXPECT_THROW(t.insert("c", Tensor::vector({0, 0})), DegenerateVectorError);
  EXPECT_THROW(t.at("zzz"), MappingError);
  EXPECT_EQ(t.size(), 1u);
}

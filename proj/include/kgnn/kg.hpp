#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

namespace kgnn::kg {

/// Reserved vocabulary. Class membership is `<x> <rdf:type> <rdfs:Class>`;
/// dataset labels attach to entities with `<e> <kgnn:classLabel> "label"^^string`.
inline constexpr std::string_view kRdfType = "rdf:type";
inline constexpr std::string_view kRdfsClass = "rdfs:Class";
inline constexpr std::string_view kClassLabel = "kgnn:classLabel";

struct Iri {
  std::string value;

  friend auto operator<=>(const Iri&, const Iri&) = default;
};

/// True for a non-empty string without whitespace or angle brackets.
bool is_valid_iri(std::string_view value);

enum class Datatype { String, Integer, Decimal, Boolean };

std::string_view datatype_name(Datatype d);
std::optional<Datatype> datatype_from_name(std::string_view name);
/// Checks a lexical form against its datatype (string accepts anything).
bool lexical_is_valid(std::string_view lexical, Datatype d);

struct Literal {
  std::string lexical;
  Datatype datatype = Datatype::String;

  friend auto operator<=>(const Literal&, const Literal&) = default;
};

using Term = std::variant<Iri, Literal>;

/// `<iri>` or `"lexical"^^datatype` with `\` and `"` escaped.
std::string term_to_string(const Term& t);

struct Triple {
  Iri subject;
  Iri predicate;
  Term object;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Canonical line for a triple, without the trailing newline.
std::string triple_to_line(const Triple& t);

/// Ordering used for canonical serialization: (subject, predicate, object text).
bool canonical_less(const Triple& a, const Triple& b);

enum class Direction { Outgoing, Incoming, Both };

struct Neighbor {
  Iri predicate;
  Term other;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct GraphStats {
  std::size_t class_count = 0;
  std::size_t object_property_count = 0;
  std::size_t datatype_property_count = 0;
  std::size_t individual_count = 0;

  friend bool operator==(const GraphStats&, const GraphStats&) = default;
};

/// Duplicate-free triple set in insertion order, indexed by subject,
/// predicate and object.
class KnowledgeGraph {
 public:
  /// Returns false (and changes nothing) when the triple is already present.
  bool add(Triple t);

  std::size_t size() const noexcept { return triples_.size(); }
  bool empty() const noexcept { return triples_.empty(); }
  const std::vector<Triple>& triples() const noexcept { return triples_; }
  bool contains(const Triple& t) const;

  /// Triple indices, insertion order.
  const std::vector<std::size_t>& with_subject(std::string_view iri) const;
  const std::vector<std::size_t>& with_predicate(std::string_view iri) const;
  const std::vector<std::size_t>& with_object(const Term& object) const;

  /// IRIs used as subject or IRI object, in order of first appearance.
  std::vector<Iri> entities() const;
  /// Predicates in order of first appearance.
  std::vector<Iri> predicates() const;

  std::vector<Neighbor> neighbors(const Iri& entity, Direction direction) const;
  GraphStats stats() const;

  /// Entities carrying `<kgnn:classLabel> "label"`, for one label.
  std::vector<Iri> entities_with_label(std::string_view label) const;

 private:
  std::vector<Triple> triples_;
  std::unordered_set<std::string> keys_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_subject_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_predicate_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_object_;
};

/// Parses the line-oriented triple format. Blank lines and lines whose first
/// non-blank character is `#` are skipped. Throws ParseError with a 1-based
/// line number on malformed input.
KnowledgeGraph parse_triples(std::string_view text);

/// Canonical text: one line per triple in canonical order, each ending in " .\n".
std::string serialize(const KnowledgeGraph& kg);

KnowledgeGraph load_triples_file(const std::string& path);

}  // namespace kgnn::kg

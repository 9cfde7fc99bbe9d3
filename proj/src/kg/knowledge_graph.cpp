#include <algorithm>
#include <set>

#include "kgnn/kg.hpp"

namespace kgnn::kg {
namespace {

const std::vector<std::size_t> kNoHits;

const std::vector<std::size_t>& lookup(const std::unordered_map<std::string, std::vector<std::size_t>>& index,
                                       const std::string& key) {
  auto it = index.find(key);
  return it == index.end() ? kNoHits : it->second;
}

}  // namespace

bool is_valid_iri(std::string_view value) {
  if (value.empty()) return false;
  for (char c : value)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || c == '<' || c == '>')
      return false;
  return true;
}

std::string_view datatype_name(Datatype d) {
  switch (d) {
    case Datatype::String: return "string";
    case Datatype::Integer: return "integer";
    case Datatype::Decimal: return "decimal";
    case Datatype::Boolean: return "boolean";
  }
  return "string";
}

std::optional<Datatype> datatype_from_name(std::string_view name) {
  if (name == "string") return Datatype::String;
  if (name == "integer") return Datatype::Integer;
  if (name == "decimal") return Datatype::Decimal;
  if (name == "boolean") return Datatype::Boolean;
  return std::nullopt;
}

bool lexical_is_valid(std::string_view lex, Datatype d) {
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  switch (d) {
    case Datatype::String:
      return true;
    case Datatype::Boolean:
      return lex == "true" || lex == "false";
    case Datatype::Integer: {
      std::size_t i = (!lex.empty() && (lex[0] == '+' || lex[0] == '-')) ? 1 : 0;
      if (i == lex.size()) return false;
      return std::all_of(lex.begin() + static_cast<std::ptrdiff_t>(i), lex.end(), is_digit);
    }
    case Datatype::Decimal: {
      std::size_t i = (!lex.empty() && (lex[0] == '+' || lex[0] == '-')) ? 1 : 0;
      std::size_t digits = 0;
      bool dot = false;
      for (; i < lex.size(); ++i) {
        if (is_digit(lex[i])) {
          ++digits;
        } else if (lex[i] == '.' && !dot) {
          dot = true;
        } else {
          return false;
        }
      }
      return digits > 0;
    }
  }
  return false;
}

std::string term_to_string(const Term& t) {
  if (const Iri* iri = std::get_if<Iri>(&t)) return "<" + iri->value + ">";
  const Literal& lit = std::get<Literal>(t);
  std::string s = "\"";
  for (char c : lit.lexical) {
    switch (c) {
      case '"': s += "\\\""; break;
      case '\\': s += "\\\\"; break;
      case '\n': s += "\\n"; break;
      case '\r': s += "\\r"; break;
      case '\t': s += "\\t"; break;
      default: s += c;
    }
  }
  s += "\"^^";
  s += datatype_name(lit.datatype);
  return s;
}

std::string triple_to_line(const Triple& t) {
  return "<" + t.subject.value + "> <" + t.predicate.value + "> " + term_to_string(t.object) + " .";
}

bool canonical_less(const Triple& a, const Triple& b) {
  if (a.subject.value != b.subject.value) return a.subject.value < b.subject.value;
  if (a.predicate.value != b.predicate.value) return a.predicate.value < b.predicate.value;
  return term_to_string(a.object) < term_to_string(b.object);
}

bool KnowledgeGraph::add(Triple t) {
  std::string key = triple_to_line(t);
  if (!keys_.insert(std::move(key)).second) return false;
  const std::size_t idx = triples_.size();
  by_subject_[t.subject.value].push_back(idx);
  by_predicate_[t.predicate.value].push_back(idx);
  by_object_[term_to_string(t.object)].push_back(idx);
  triples_.push_back(std::move(t));
  return true;
}

bool KnowledgeGraph::contains(const Triple& t) const { return keys_.count(triple_to_line(t)) > 0; }

const std::vector<std::size_t>& KnowledgeGraph::with_subject(std::string_view iri) const {
  return lookup(by_subject_, std::string(iri));
}

const std::vector<std::size_t>& KnowledgeGraph::with_predicate(std::string_view iri) const {
  return lookup(by_predicate_, std::string(iri));
}

const std::vector<std::size_t>& KnowledgeGraph::with_object(const Term& object) const {
  return lookup(by_object_, term_to_string(object));
}

std::vector<Iri> KnowledgeGraph::entities() const {
  std::vector<Iri> out;
  std::unordered_set<std::string> seen;
  for (const Triple& t : triples_) {
    if (seen.insert(t.subject.value).second) out.push_back(t.subject);
    if (const Iri* o = std::get_if<Iri>(&t.object))
      if (seen.insert(o->value).second) out.push_back(*o);
  }
  return out;
}

std::vector<Iri> KnowledgeGraph::predicates() const {
  std::vector<Iri> out;
  std::unordered_set<std::string> seen;
  for (const Triple& t : triples_)
    if (seen.insert(t.predicate.value).second) out.push_back(t.predicate);
  return out;
}

std::vector<Neighbor> KnowledgeGraph::neighbors(const Iri& entity, Direction direction) const {
  std::vector<std::size_t> hits;
  if (direction != Direction::Incoming) {
    const auto& s = with_subject(entity.value);
    hits.insert(hits.end(), s.begin(), s.end());
  }
  if (direction != Direction::Outgoing) {
    const auto& o = with_object(Term{entity});
    hits.insert(hits.end(), o.begin(), o.end());
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  std::stable_sort(hits.begin(), hits.end(),
                   [&](std::size_t a, std::size_t b) { return canonical_less(triples_[a], triples_[b]); });

  std::vector<Neighbor> out;
  for (std::size_t i : hits) {
    const Triple& t = triples_[i];
    if (direction != Direction::Incoming && t.subject == entity) out.push_back({t.predicate, t.object});
    if (direction != Direction::Outgoing) {
      const Iri* o = std::get_if<Iri>(&t.object);
      if (o && *o == entity) out.push_back({t.predicate, t.subject});
    }
  }
  return out;
}

GraphStats KnowledgeGraph::stats() const {
  std::set<std::string> classes, object_props, datatype_props, individuals;
  for (std::size_t i : with_predicate(kRdfType)) {
    const Triple& t = triples_[i];
    const Iri* o = std::get_if<Iri>(&t.object);
    if (!o) continue;
    if (o->value == kRdfsClass)
      classes.insert(t.subject.value);
    else
      individuals.insert(t.subject.value);
  }
  std::set<std::string> with_literal;
  for (const Triple& t : triples_)
    if (std::holds_alternative<Literal>(t.object)) with_literal.insert(t.predicate.value);
  for (const Triple& t : triples_) {
    if (with_literal.count(t.predicate.value))
      datatype_props.insert(t.predicate.value);
    else
      object_props.insert(t.predicate.value);
  }
  return {classes.size(), object_props.size(), datatype_props.size(), individuals.size()};
}

std::vector<Iri> KnowledgeGraph::entities_with_label(std::string_view label) const {
  std::vector<Iri> out;
  for (std::size_t i : with_object(Term{Literal{std::string(label), Datatype::String}}))
    if (triples_[i].predicate.value == kClassLabel) out.push_back(triples_[i].subject);
  return out;
}

std::string serialize(const KnowledgeGraph& kg) {
  std::vector<const Triple*> order;
  order.reserve(kg.size());
  for (const Triple& t : kg.triples()) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](const Triple* a, const Triple* b) { return canonical_less(*a, *b); });
  std::string out;
  for (const Triple* t : order) {
    out += triple_to_line(*t);
    out += '\n';
  }
  return out;
}

}  // namespace kgnn::kg

#include "kgnn/error.hpp"
#include "kgnn/kg.hpp"
#include "kgnn/serialize.hpp"

namespace kgnn::kg {
namespace {

/// Returns the 0-based offset of the first invalid UTF-8 byte, or npos.
std::size_t invalid_utf8_at(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3f);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return i;
    i += len;
  }
  return std::string_view::npos;
}

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t line_no) : s_(line), line_no_(line_no) {}

  Triple parse() {
    skip_ws();
    Triple t;
    t.subject = iri("subject");
    require_ws();
    t.predicate = iri("predicate");
    require_ws();
    if (peek() == '<') {
      t.object = iri("object");
    } else if (peek() == '"') {
      t.object = literal();
    } else {
      fail("expected '<' or '\"' to start the object");
    }
    skip_ws();
    if (peek() != '.') fail("expected '.' to end the triple");
    ++pos_;
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected text after '.'");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_no_, pos_ + 1, msg); }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  void require_ws() {
    if (peek() != ' ' && peek() != '\t') fail("expected whitespace between terms");
    skip_ws();
  }

  Iri iri(const char* role) {
    if (peek() != '<') fail(std::string("expected '<' to start the ") + role);
    const std::size_t start = ++pos_;
    const std::size_t end = s_.find('>', start);
    if (end == std::string_view::npos) fail(std::string("unterminated IRI in ") + role);
    std::string_view value = s_.substr(start, end - start);
    if (!is_valid_iri(value)) fail(std::string("invalid IRI in ") + role);
    pos_ = end + 1;
    return Iri{std::string(value)};
  }

  Literal literal() {
    ++pos_;  // opening quote
    std::string lex;
    for (;;) {
      if (pos_ >= s_.size()) fail("unterminated literal");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        lex += c;
        continue;
      }
      if (pos_ >= s_.size()) fail("dangling escape in literal");
      switch (s_[pos_++]) {
        case '"': lex += '"'; break;
        case '\\': lex += '\\'; break;
        case 'n': lex += '\n'; break;
        case 'r': lex += '\r'; break;
        case 't': lex += '\t'; break;
        default: --pos_; fail("unknown escape in literal");
      }
    }
    if (s_.substr(pos_, 2) != "^^") fail("expected '^^datatype' after literal");
    pos_ += 2;
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t' && s_[pos_] != '.') ++pos_;
    const std::string_view name = s_.substr(start, pos_ - start);
    const auto dt = datatype_from_name(name);
    if (!dt) {
      pos_ = start;
      fail("unknown datatype '" + std::string(name) + "'");
    }
    if (!lexical_is_valid(lex, *dt)) {
      pos_ = start;
      fail("lexical form '" + lex + "' is not a valid " + std::string(name));
    }
    return Literal{std::move(lex), *dt};
  }

  std::string_view s_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

}  // namespace

KnowledgeGraph parse_triples(std::string_view text) {
  KnowledgeGraph kg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (const std::size_t bad = invalid_utf8_at(line); bad != std::string_view::npos)
      throw ParseError(line_no, bad + 1, "invalid UTF-8");
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;
    kg.add(LineParser(line, line_no).parse());
  }
  return kg;
}

KnowledgeGraph load_triples_file(const std::string& path) { return parse_triples(read_text_file(path)); }

}  // namespace kgnn::kg

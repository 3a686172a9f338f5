#include "procqa/task_graph.hpp"

#include <cctype>
#include <optional>

#include "procqa/error.hpp"

namespace procqa {

namespace {

enum class Tok { Id, LBrace, RBrace, LBracket, RBracket, Semi, Comma, Equals, Arrow, UndirEdge,
                 Colon, End };

struct Token {
  Tok kind;
  std::string text;
  bool quoted = false;
  int line = 1;
  int column = 1;
};

class DotLexer {
 public:
  explicit DotLexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space_and_comments();
    Token t{Tok::End, "", false, line_, col_};
    if (pos_ >= src_.size()) return t;
    const char c = src_[pos_];
    auto single = [&](Tok k) {
      advance();
      t.kind = k;
      t.text = std::string(1, c);
      return t;
    };
    switch (c) {
      case '{': return single(Tok::LBrace);
      case '}': return single(Tok::RBrace);
      case '[': return single(Tok::LBracket);
      case ']': return single(Tok::RBracket);
      case ';': return single(Tok::Semi);
      case ',': return single(Tok::Comma);
      case '=': return single(Tok::Equals);
      case ':': return single(Tok::Colon);
      default: break;
    }
    if (c == '-' && peek(1) == '>') {
      advance(2);
      t.kind = Tok::Arrow;
      t.text = "->";
      return t;
    }
    if (c == '-' && peek(1) == '-') {
      advance(2);
      t.kind = Tok::UndirEdge;
      t.text = "--";
      return t;
    }
    if (c == '"') return quoted(t);
    if (c == '<') return html(t);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
        static_cast<unsigned char>(c) >= 0x80) {
      while (pos_ < src_.size()) {
        const auto ch = static_cast<unsigned char>(src_[pos_]);
        if (!(std::isalnum(ch) || ch == '_' || ch >= 0x80)) break;
        t.text += src_[pos_];
        advance();
      }
      t.kind = Tok::Id;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-') {
      if (c == '-') {
        t.text += c;
        advance();
      }
      bool digits = false;
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
        digits = digits || src_[pos_] != '.';
        t.text += src_[pos_];
        advance();
      }
      if (!digits) error(t, "malformed numeral");
      t.kind = Tok::Id;
      return t;
    }
    error(t, std::string("unexpected character '") + c + "'");
  }

  [[noreturn]] static void error(const Token& at, const std::string& msg,
                                 Errc code = Errc::ParseError) {
    Error err(code, "line " + std::to_string(at.line) + ", column " + std::to_string(at.column) +
                        ": " + msg);
    err.line = at.line;
    err.column = at.column;
    throw err;
  }

 private:
  char peek(std::size_t ahead) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == '#' && col_ == 1) {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        Token start{Tok::End, "", false, line_, col_};
        advance(2);
        while (pos_ < src_.size() && !(src_[pos_] == '*' && peek(1) == '/')) advance();
        if (pos_ >= src_.size()) error(start, "unterminated block comment");
        advance(2);
      } else {
        break;
      }
    }
  }

  Token quoted(Token t) {
    advance();
    while (true) {
      if (pos_ >= src_.size()) error(t, "unterminated string");
      const char c = src_[pos_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\\' && peek(1) == '"') {
        t.text += '"';
        advance(2);
        continue;
      }
      if (c == '\\' && peek(1) == '\n') {
        advance(2);
        continue;
      }
      t.text += c;
      advance();
    }
    t.kind = Tok::Id;
    t.quoted = true;
    return t;
  }

  // HTML-like labels only appear as attribute values; kept as an opaque id.
  Token html(Token t) {
    int depth = 0;
    do {
      if (pos_ >= src_.size()) error(t, "unterminated HTML string");
      if (src_[pos_] == '<') ++depth;
      if (src_[pos_] == '>') --depth;
      t.text += src_[pos_];
      advance();
    } while (depth > 0);
    t.kind = Tok::Id;
    t.quoted = true;
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

bool keyword(const Token& t, std::string_view kw) {
  if (t.kind != Tok::Id || t.quoted || t.text.size() != kw.size()) return false;
  for (std::size_t i = 0; i < kw.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(t.text[i])) != kw[i]) return false;
  }
  return true;
}

class DotParser {
 public:
  explicit DotParser(std::string_view src) : lex_(src) { bump(); }

  TaskGraph parse() {
    if (keyword(cur_, "strict")) bump();
    if (keyword(cur_, "graph")) {
      DotLexer::error(cur_, "undirected graphs are not supported", Errc::UnsupportedConstruct);
    }
    if (!keyword(cur_, "digraph")) DotLexer::error(cur_, "expected 'digraph'");
    bump();
    if (cur_.kind == Tok::Id) bump();
    expect(Tok::LBrace, "'{'");
    while (cur_.kind != Tok::RBrace) {
      if (cur_.kind == Tok::End) DotLexer::error(cur_, "missing closing '}'");
      statement();
      while (cur_.kind == Tok::Semi || cur_.kind == Tok::Comma) bump();
    }
    bump();
    if (cur_.kind != Tok::End) DotLexer::error(cur_, "unexpected content after graph");
    return std::move(graph_);
  }

 private:
  void bump() { cur_ = lex_.next(); }

  void expect(Tok kind, const char* what) {
    if (cur_.kind != kind) DotLexer::error(cur_, std::string("expected ") + what);
    bump();
  }

  void statement() {
    if (keyword(cur_, "subgraph") || cur_.kind == Tok::LBrace) {
      DotLexer::error(cur_, "subgraphs are not supported", Errc::UnsupportedConstruct);
    }
    if (keyword(cur_, "graph") || keyword(cur_, "node") || keyword(cur_, "edge")) {
      bump();
      if (cur_.kind != Tok::LBracket) DotLexer::error(cur_, "expected attribute list");
      attributes();
      return;
    }
    if (cur_.kind != Tok::Id) DotLexer::error(cur_, "expected a statement");
    Token first = cur_;
    bump();
    if (cur_.kind == Tok::Equals) {
      bump();
      if (cur_.kind != Tok::Id) DotLexer::error(cur_, "expected attribute value");
      bump();
      return;
    }
    skip_port();
    std::vector<Token> chain{first};
    while (cur_.kind == Tok::Arrow || cur_.kind == Tok::UndirEdge) {
      if (cur_.kind == Tok::UndirEdge) {
        DotLexer::error(cur_, "undirected edges are not supported", Errc::UnsupportedConstruct);
      }
      bump();
      if (keyword(cur_, "subgraph") || cur_.kind == Tok::LBrace) {
        DotLexer::error(cur_, "subgraph edge targets are not supported",
                        Errc::UnsupportedConstruct);
      }
      if (cur_.kind != Tok::Id) DotLexer::error(cur_, "expected node identifier after '->'");
      chain.push_back(cur_);
      bump();
      skip_port();
    }
    if (cur_.kind == Tok::LBracket) attributes();
    for (const auto& t : chain) graph_.nodes.insert(t.text);
    for (std::size_t i = 1; i < chain.size(); ++i) {
      if (chain[i - 1].text == chain[i].text) {
        DotLexer::error(chain[i], "self-loop on '" + chain[i].text + "'", Errc::InvalidGraph);
      }
      graph_.edges.emplace(chain[i - 1].text, chain[i].text);
    }
  }

  void skip_port() {
    for (int i = 0; i < 2 && cur_.kind == Tok::Colon; ++i) {
      bump();
      if (cur_.kind != Tok::Id) DotLexer::error(cur_, "expected port name");
      bump();
    }
  }

  void attributes() {
    while (cur_.kind == Tok::LBracket) {
      bump();
      while (cur_.kind != Tok::RBracket) {
        if (cur_.kind != Tok::Id) DotLexer::error(cur_, "expected attribute name");
        bump();
        if (cur_.kind == Tok::Equals) {
          bump();
          if (cur_.kind != Tok::Id) DotLexer::error(cur_, "expected attribute value");
          bump();
        }
        if (cur_.kind == Tok::Comma || cur_.kind == Tok::Semi) bump();
      }
      bump();
    }
  }

  DotLexer lex_;
  Token cur_;
  TaskGraph graph_;
};

}  // namespace

TaskGraph parse_task_graph(std::string_view dot_text) { return DotParser(dot_text).parse(); }

std::vector<std::string> task_graph_lines(const TaskGraph& graph) {
  std::vector<std::string> lines;
  lines.reserve(graph.edges.size());
  for (const auto& [from, to] : graph.edges) lines.push_back(from + " -> " + to);
  return lines;
}

}  // namespace procqa

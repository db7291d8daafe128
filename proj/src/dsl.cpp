#include "mfa/dsl.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "mfa/backend_config.hpp"
#include "mfa/error.hpp"

namespace mfa::dsl {

std::string ParseError::message() const {
  std::ostringstream os;
  os << line << ':' << column << ": expected " << expected << ", found " << found;
  return os.str();
}

namespace {

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

enum class Tok { Ident, String, Number, LBrace, RBrace, Arrow, Comma, Equals, Colon, End, Bad };

struct Token {
  Tok kind = Tok::End;
  std::string text;  // identifier / number text, unescaped string body, or offending input
  int line = 1;
  int column = 1;
  int end_line = 1;    // position just past the token
  int end_column = 1;
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::Ident: return "'" + t.text + "'";
    case Tok::String: return "string";
    case Tok::Number: return "number " + t.text;
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::Arrow: return "'->'";
    case Tok::Comma: return "','";
    case Tok::Equals: return "'='";
    case Tok::Colon: return "':'";
    case Tok::End: return "end of input";
    case Tok::Bad: return t.text;
  }
  return "?";
}

// Length of a valid UTF-8 sequence starting at s[i], or 0.
std::size_t utf8_length(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  std::size_t n = 0;
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0 && c >= 0xC2) n = 2;
  else if ((c & 0xF0) == 0xE0) n = 3;
  else if ((c & 0xF8) == 0xF0 && c <= 0xF4) n = 4;
  else return 0;
  if (i + n > s.size()) return 0;
  for (std::size_t k = 1; k < n; ++k)
    if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return 0;
  return n;
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_trivia();
    Token t;
    t.line = line_;
    t.column = column_;
    if (pos_ >= src_.size()) {
      t.kind = Tok::End;
      return finish(t);
    }
    const char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      t.kind = Tok::Ident;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        t.text.push_back(advance());
      return finish(t);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      return lex_number(t);
    }
    if (c == '"') return lex_string(t);
    if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
      advance();
      advance();
      t.kind = Tok::Arrow;
      return finish(t);
    }
    switch (c) {
      case '{': t.kind = Tok::LBrace; break;
      case '}': t.kind = Tok::RBrace; break;
      case ',': t.kind = Tok::Comma; break;
      case '=': t.kind = Tok::Equals; break;
      case ':': t.kind = Tok::Colon; break;
      default: {
        t.kind = Tok::Bad;
        const std::size_t n = utf8_length(src_, pos_);
        if (n == 0) {
          t.text = "invalid UTF-8 byte";
          advance();
        } else {
          std::string ch;
          for (std::size_t k = 0; k < n; ++k) ch.push_back(advance());
          t.text = "unexpected character '" + ch + "'";
        }
        return finish(t);
      }
    }
    advance();
    return finish(t);
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++column_;  // columns count code points
    }
    return c;
  }

  Token& finish(Token& t) {
    t.end_line = line_;
    t.end_column = column_;
    return t;
  }

  void skip_trivia() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        break;
      }
    }
  }

  Token lex_number(Token& t) {
    t.kind = Tok::Number;
    if (src_[pos_] == '-') t.text.push_back(advance());
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) t.text.push_back(advance());
    if (pos_ + 1 < src_.size() && src_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
      t.text.push_back(advance());
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) t.text.push_back(advance());
    }
    return finish(t);
  }

  Token lex_string(Token& t) {
    advance();  // opening quote
    std::string body;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') {
        t.kind = Tok::Bad;
        t.text = "unterminated string";
        return finish(t);
      }
      const char c = src_[pos_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\\') {
        advance();
        if (pos_ >= src_.size()) continue;
        const char e = advance();
        switch (e) {
          case 'n': body.push_back('\n'); break;
          case 't': body.push_back('\t'); break;
          case 'r': body.push_back('\r'); break;
          case '"': body.push_back('"'); break;
          case '\\': body.push_back('\\'); break;
          default:
            t.kind = Tok::Bad;
            t.text = std::string("unknown escape '\\") + e + "'";
            return finish(t);
        }
        continue;
      }
      const std::size_t n = utf8_length(src_, pos_);
      if (n == 0) {
        t.kind = Tok::Bad;
        t.text = "invalid UTF-8 byte";
        advance();
        return finish(t);
      }
      for (std::size_t k = 0; k < n; ++k) body.push_back(advance());
    }
    t.kind = Tok::String;
    t.text = std::move(body);
    return finish(t);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

constexpr std::array kItemKeywords = {"state", "trigger", "history", "edge", "initial"};

bool is_item_keyword(const Token& t) {
  return t.kind == Tok::Ident &&
         std::find(kItemKeywords.begin(), kItemKeywords.end(), t.text) != kItemKeywords.end();
}

struct SyntaxError {
  ParseError error;
};

struct Attribute {
  std::string key;
  std::string value;
  std::optional<AttachmentSpec> attachment;  // key == "history"
  Token at;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) {
    current_ = lexer_.next();
  }

  ParseResult run() {
    ParseResult result;
    Automaton a;
    try {
      expect_keyword("automaton");
      a.name = expect(Tok::String, "automaton name string").text;
      expect(Tok::LBrace, "'{'");
    } catch (const SyntaxError& e) {
      result.errors.push_back(e.error);
      return result;
    }

    while (true) {
      if (current_.kind == Tok::RBrace) {
        advance();
        if (current_.kind != Tok::End) errors_.push_back(make_error("end of input", false));
        break;
      }
      if (current_.kind == Tok::End) {
        errors_.push_back(make_error("'}'"));
        break;
      }
      try {
        parse_item(a);
      } catch (const SyntaxError& e) {
        errors_.push_back(e.error);
        if (errors_.size() >= 50) break;
        recover();
      }
    }

    resolve_edges(a);
    result.errors = std::move(errors_);
    if (result.errors.empty()) result.automaton = std::move(a);
    return result;
  }

 private:
  void advance() {
    previous_ = current_;
    if (lookahead_) {
      current_ = std::move(*lookahead_);
      lookahead_.reset();
    } else {
      current_ = lexer_.next();
    }
  }

  const Token& peek() {
    if (!lookahead_) lookahead_ = lexer_.next();
    return *lookahead_;
  }

  // `history` is both an item keyword and a state/trigger attribute.
  bool at_attribute() {
    if (current_.kind != Tok::Ident) return false;
    if (!is_item_keyword(current_)) return true;
    return current_.text == "history" && peek().kind == Tok::Equals;
  }

  // Errors point at the offending token. When that token opens the next item
  // on a later line, the current item was cut short, so point just after the
  // previous token instead.
  ParseError make_error(std::string expected, bool allow_back = true) const {
    ParseError e;
    e.expected = std::move(expected);
    e.found = describe(current_);
    const bool next_item = current_.kind == Tok::RBrace || current_.kind == Tok::End ||
                           (current_.kind == Tok::Ident && is_item_keyword(current_));
    if (allow_back && next_item && have_previous_ && current_.line > previous_.end_line) {
      e.line = previous_.end_line;
      e.column = previous_.end_column;
    } else {
      e.line = current_.line;
      e.column = current_.column;
    }
    return e;
  }

  [[noreturn]] void fail(std::string expected) const { throw SyntaxError{make_error(std::move(expected))}; }

  [[noreturn]] void fail_at(const Token& at, std::string expected, std::string found) const {
    throw SyntaxError{ParseError{at.line, at.column, std::move(expected), std::move(found)}};
  }

  Token expect(Tok kind, const std::string& what) {
    if (current_.kind != kind) fail(what);
    Token t = current_;
    have_previous_ = true;
    advance();
    return t;
  }

  void expect_keyword(const char* word) {
    if (current_.kind != Tok::Ident || current_.text != word) fail(std::string("'") + word + "'");
    have_previous_ = true;
    advance();
  }

  bool accept_keyword(const char* word) {
    if (current_.kind == Tok::Ident && current_.text == word) {
      advance();
      return true;
    }
    return false;
  }

  void recover() {
    while (current_.kind != Tok::End && current_.kind != Tok::RBrace && !is_item_keyword(current_))
      advance();
  }

  void parse_item(Automaton& a) {
    if (!is_item_keyword(current_)) fail("'state', 'trigger', 'history', 'edge', 'initial' or '}'");
    const Token kw = current_;
    have_previous_ = true;
    advance();
    if (kw.text == "state") parse_state(a, kw);
    else if (kw.text == "trigger") parse_trigger(a, kw);
    else if (kw.text == "history") parse_history(a);
    else if (kw.text == "edge") parse_edge(a, kw);
    else parse_initial(a, kw);
  }

  Token expect_id(const std::string& what) {
    if (current_.kind == Tok::Ident && is_item_keyword(current_)) fail(what);
    return expect(Tok::Ident, what);
  }

  void declare(std::unordered_set<std::string>& ns, const Token& id, const char* what) {
    if (!ns.insert(id.text).second)
      errors_.push_back(ParseError{id.line, id.column, std::string("unique ") + what + " id",
                                   "duplicate '" + id.text + "'"});
  }

  std::vector<Attribute> parse_attrs(bool (*known)(std::string_view) noexcept, const char* owner) {
    std::vector<Attribute> attrs;
    std::set<std::string> seen;
    while (at_attribute()) {
      Token key = current_;
      advance();
      expect(Tok::Equals, "'=' after '" + key.text + "'");
      if (!known(key.text) && key.text != "history" && key.text != "display")
        fail_at(key, std::string("attribute of a ") + owner, "unknown attribute '" + key.text + "'");
      if (key.text != "history" && !seen.insert(key.text).second)
        fail_at(key, "attribute set once", "duplicate attribute '" + key.text + "'");

      Attribute attr;
      attr.key = key.text;
      attr.at = key;
      if (key.text == "history") {
        Token archive = expect_id("history id");
        expect(Tok::Colon, "':' and an access mode");
        Token mode = expect(Tok::Ident, "access mode r, w or rw");
        auto parsed = parse_access_mode(mode.text);
        if (!parsed) fail_at(mode, "access mode r, w or rw", "'" + mode.text + "'");
        attr.attachment = AttachmentSpec{ArchiveId(archive.text), *parsed};
      } else if (current_.kind == Tok::String || current_.kind == Tok::Number ||
                 (current_.kind == Tok::Ident && !is_item_keyword(current_))) {
        attr.value = current_.text;
        advance();
      } else {
        fail("value for '" + key.text + "'");
      }
      attrs.push_back(std::move(attr));
    }
    return attrs;
  }

  static bool state_key(std::string_view k) noexcept { return is_state_key(k); }
  static bool trigger_key(std::string_view k) noexcept { return is_trigger_key(k); }

  void parse_state(Automaton& a, const Token& kw) {
    Token id = expect_id("state id");
    auto kind = current_.kind == Tok::Ident ? parse_state_kind(current_.text) : std::nullopt;
    if (!kind) fail("state kind user, dialer or writer");
    expect(Tok::Ident, "");

    StateNode node;
    node.id = StateId(id.text);
    node.kind = *kind;
    node.location = {kw.line, kw.column};
    node.is_final = accept_keyword("final") || node.is_user();
    node.display = node.kind == StateKind::Dialer ? DisplayPolicy::Always : DisplayPolicy::Never;

    for (auto& attr : parse_attrs(&Parser::state_key, "state")) {
      if (attr.attachment) {
        node.attachments.push_back(*attr.attachment);
      } else if (attr.key == "display") {
        auto policy = parse_display_policy(attr.value);
        if (!policy) fail_at(attr.at, "display always, never or auto", "'" + attr.value + "'");
        node.display = *policy;
      } else {
        node.backend[attr.key] = std::move(attr.value);
      }
    }
    declare(state_ids_, id, "state");
    a.states.push_back(std::move(node));
  }

  void parse_trigger(Automaton& a, const Token& kw) {
    Token id = expect_id("trigger id");
    auto kind = current_.kind == Tok::Ident ? parse_trigger_kind(current_.text) : std::nullopt;
    if (!kind) fail("trigger kind always, keyword, pattern or llm");
    expect(Tok::Ident, "");

    TriggerDef def;
    def.id = TriggerId(id.text);
    def.kind = *kind;
    def.location = {kw.line, kw.column};
    for (auto& attr : parse_attrs(&Parser::trigger_key, "trigger")) {
      if (attr.key == "display") fail_at(attr.at, "attribute of a trigger", "unknown attribute 'display'");
      if (attr.attachment) {
        def.attachments.push_back(*attr.attachment);
      } else if (attr.key == "priority") {
        try {
          std::size_t used = 0;
          def.default_priority = std::stoi(attr.value, &used);
          if (used != attr.value.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          fail_at(attr.at, "integer priority", "'" + attr.value + "'");
        }
      } else {
        def.params[attr.key] = std::move(attr.value);
      }
    }
    declare(trigger_ids_, id, "trigger");
    a.triggers.push_back(std::move(def));
  }

  void parse_history(Automaton& a) {
    Token id = expect_id("history id");
    declare(archive_ids_, id, "history");
    a.archives.emplace_back(id.text);
  }

  void parse_edge(Automaton& a, const Token& kw) {
    TriggerEdge e;
    e.location = {kw.line, kw.column};
    e.from = StateId(expect_id("source state id").text);
    expect(Tok::Arrow, "'->'");
    e.to = StateId(expect_id("target state id").text);
    if (accept_keyword("on")) {
      e.triggers.emplace_back(expect_id("trigger id").text);
      while (current_.kind == Tok::Comma) {
        advance();
        e.triggers.emplace_back(expect_id("trigger id").text);
      }
    }
    if (accept_keyword("priority")) {
      Token p = expect(Tok::Number, "integer priority");
      try {
        std::size_t used = 0;
        e.priority = std::stoi(p.text, &used);
        if (used != p.text.size()) throw std::invalid_argument("not an integer");
      } catch (const std::exception&) {
        fail_at(p, "integer priority", "number " + p.text);
      }
      explicit_priority_.insert(a.edges.size());
    }
    a.edges.push_back(std::move(e));
  }

  void parse_initial(Automaton& a, const Token& kw) {
    Token id = expect_id("initial state id");
    if (a.initial) {
      errors_.push_back(ParseError{kw.line, kw.column, "a single initial declaration", "second 'initial'"});
      return;
    }
    a.initial = StateId(id.text);
  }

  // Default priorities need every trigger declaration, which may come after
  // the edge; ids are made unique per (from, to) pair.
  void resolve_edges(Automaton& a) {
    std::map<std::pair<std::string, std::string>, int> seen;
    for (std::size_t i = 0; i < a.edges.size(); ++i) {
      auto& e = a.edges[i];
      if (!explicit_priority_.count(i)) {
        const TriggerDef* def = e.triggers.empty() ? nullptr : a.find_trigger(e.triggers.front());
        e.priority = def ? def->default_priority : 1;
      }
      const int n = ++seen[{e.from.str(), e.to.str()}];
      std::string id = e.from.str() + "->" + e.to.str();
      if (n > 1) id += "#" + std::to_string(n);
      e.id = EdgeId(std::move(id));
    }
  }

  Lexer lexer_;
  Token current_;
  Token previous_;
  std::optional<Token> lookahead_;
  bool have_previous_ = false;
  std::vector<ParseError> errors_;
  std::unordered_set<std::string> state_ids_, trigger_ids_, archive_ids_;
  std::set<std::size_t> explicit_priority_;
};

}  // namespace

ParseResult parse(std::string_view text) {
  ParseResult result;
  // Totality: any failure inside becomes a diagnostic, never an exception.
  try {
    result = Parser(text).run();
  } catch (const std::exception& e) {
    result.automaton.reset();
    result.errors.push_back(ParseError{1, 1, "well-formed definition", e.what()});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serializer
// ---------------------------------------------------------------------------

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

namespace {

void write_attachments(std::ostream& os, const std::vector<AttachmentSpec>& atts) {
  for (const auto& att : atts) os << " history=" << att.archive << ':' << to_string(att.mode);
}

void write_params(std::ostream& os, const Params& params) {
  for (const auto& [k, v] : params) os << ' ' << k << '=' << quote(v);
}

DisplayPolicy default_display(StateKind kind) {
  return kind == StateKind::Dialer ? DisplayPolicy::Always : DisplayPolicy::Never;
}

}  // namespace

std::string serialize(const Automaton& a) {
  std::ostringstream os;
  os << "automaton " << quote(a.name) << " {\n";

  std::vector<const StateNode*> states;
  for (const auto& s : a.states) states.push_back(&s);
  std::sort(states.begin(), states.end(), [](auto* x, auto* y) { return x->id < y->id; });
  for (const auto* s : states) {
    os << "  state " << s->id << ' ' << to_string(s->kind);
    if (s->is_final) os << " final";
    if (s->display != default_display(s->kind)) os << " display=" << to_string(s->display);
    write_attachments(os, s->attachments);
    write_params(os, s->backend);
    os << '\n';
  }

  std::vector<const TriggerDef*> triggers;
  for (const auto& t : a.triggers) triggers.push_back(&t);
  std::sort(triggers.begin(), triggers.end(), [](auto* x, auto* y) { return x->id < y->id; });
  for (const auto* t : triggers) {
    os << "  trigger " << t->id << ' ' << to_string(t->kind) << " priority=" << t->default_priority;
    write_attachments(os, t->attachments);
    write_params(os, t->params);
    os << '\n';
  }

  std::vector<ArchiveId> archives = a.archives;
  std::sort(archives.begin(), archives.end());
  for (const auto& h : archives) os << "  history " << h << '\n';

  std::vector<const TriggerEdge*> edges;
  for (const auto& e : a.edges) edges.push_back(&e);
  auto key = [](const TriggerEdge* e) {
    std::vector<std::string> ts;
    for (const auto& t : e->triggers) ts.push_back(t.str());
    return std::make_tuple(e->from.str(), e->to.str(), ts, e->priority);
  };
  std::stable_sort(edges.begin(), edges.end(), [&](auto* x, auto* y) { return key(x) < key(y); });
  for (const auto* e : edges) {
    os << "  edge " << e->from << " -> " << e->to;
    for (std::size_t i = 0; i < e->triggers.size(); ++i) os << (i ? ", " : " on ") << e->triggers[i];
    os << " priority " << e->priority << '\n';
  }

  if (a.initial) os << "  initial " << *a.initial << '\n';
  os << "}\n";
  return os.str();
}

Automaton load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto result = parse(ss.str());
  if (!result.ok())
    throw Error(ErrorCode::Parse, path.string() + ":" + result.errors.front().message());
  return std::move(*result.automaton);
}

}  // namespace mfa::dsl

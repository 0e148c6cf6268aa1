#include "kdn/intent.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "kdn/errors.hpp"

namespace kdn {

namespace {

enum class Tok { ident, number, lparen, rparen, arrow, lt, le, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t line = 1;
  std::size_t col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.col = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::end;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Tok::ident;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' ||
                                      src_[pos_] == '.'))
          t.text += advance();
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        t.kind = Tok::number;
        lex_number(t);
      } else if (c == '(') {
        t.kind = Tok::lparen;
        t.text = advance();
      } else if (c == ')') {
        t.kind = Tok::rparen;
        t.text = advance();
      } else if (c == '-' && peek(1) == '>') {
        t.kind = Tok::arrow;
        t.text = "->";
        advance();
        advance();
      } else if (c == '<') {
        advance();
        if (pos_ < src_.size() && src_[pos_] == '=') {
          advance();
          t.kind = Tok::le;
          t.text = "<=";
        } else {
          t.kind = Tok::lt;
          t.text = "<";
        }
      } else {
        throw ParseError(ParseFailure::syntax, t.line, t.col, std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char peek(std::size_t off) const { return pos_ + off < src_.size() ? src_[pos_ + off] : '\0'; }

  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& t) {
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        t.text += advance();
        ++n;
      }
      return n;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      t.text += advance();
      n += digits();
    }
    if (n == 0) throw ParseError(ParseFailure::syntax, t.line, t.col, "malformed number");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E') &&
        (std::isdigit(static_cast<unsigned char>(peek(1))) ||
         ((peek(1) == '+' || peek(1) == '-') && std::isdigit(static_cast<unsigned char>(peek(2)))))) {
      t.text += advance();
      if (src_[pos_] == '+' || src_[pos_] == '-') t.text += advance();
      digits();
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0, line_ = 1, col_ = 1;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, const Topology& topo) : toks_(std::move(toks)), topo_(topo) {}

  Intent run() {
    Intent intent;
    if (!is_word("minimize")) fail(cur(), "expected 'minimize'");
    intent.objective = objective();
    while (cur().kind != Tok::end) {
      if (is_word("minimize")) throw ParseError(ParseFailure::duplicate_objective, cur().line, cur().col,
                                                "intent has more than one objective");
      intent.constraints.push_back(constraint());
    }
    return intent;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool is_word(const char* w) const { return cur().kind == Tok::ident && cur().text == w; }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    const std::string found = t.kind == Tok::end ? "end of input" : "'" + t.text + "'";
    throw ParseError(ParseFailure::syntax, t.line, t.col, msg + ", found " + found);
  }

  const Token& expect(Tok kind, const char* what) {
    if (cur().kind != kind) fail(cur(), std::string("expected ") + what);
    return toks_[pos_++];
  }

  ObjectiveKind objective() {
    ++pos_;  // minimize
    const Token& t = expect(Tok::ident, "'mean_delay' or 'max_delay'");
    if (t.text == "mean_delay") return ObjectiveKind::mean_delay;
    if (t.text == "max_delay") return ObjectiveKind::max_delay;
    fail(t, "expected 'mean_delay' or 'max_delay'");
  }

  std::size_t overlay_node(const Token& t) const {
    auto id = topo_.find_node(t.text);
    if (!id || !topo_.is_overlay(*id))
      throw ParseError(ParseFailure::unknown_identifier, t.line, t.col, "unknown overlay node '" + t.text + "'");
    return topo_.overlay_index(*id);
  }

  Strictness relation() {
    if (cur().kind == Tok::lt) {
      ++pos_;
      return Strictness::less;
    }
    if (cur().kind == Tok::le) {
      ++pos_;
      return Strictness::less_equal;
    }
    fail(cur(), "expected '<' or '<='");
  }

  double number(const Token& t) const {
    double v = 0.0;
    const auto* first = t.text.data();
    const auto [ptr, ec] = std::from_chars(first, first + t.text.size(), v);
    if (ec != std::errc() || ptr != first + t.text.size() || !std::isfinite(v)) fail(t, "malformed number");
    return v;
  }

  Constraint constraint() {
    Constraint c;
    const Token& head = cur();
    if (is_word("delay")) {
      ++pos_;
      c.kind = ConstraintKind::pair_delay;
      expect(Tok::lparen, "'('");
      const Token& src = expect(Tok::ident, "source node");
      expect(Tok::arrow, "'->'");
      const Token& dst = expect(Tok::ident, "destination node");
      expect(Tok::rparen, "')'");
      const std::size_t s = overlay_node(src), d = overlay_node(dst);
      if (s == d) fail(dst, "delay constraint needs two distinct nodes");
      c.pair = topo_.pair_index(s, d);
      c.strictness = relation();
      const Token& num = expect(Tok::number, "number");
      c.bound = number(num);
      const Token& unit = expect(Tok::ident, "unit 'ms' or 's'");
      if (unit.text == "ms")
        c.bound /= 1000.0;
      else if (unit.text != "s")
        fail(unit, "expected unit 'ms' or 's'");
      if (!(c.bound > 0.0)) fail(num, "delay bound must be > 0");
    } else if (is_word("util")) {
      ++pos_;
      c.kind = ConstraintKind::link_util;
      expect(Tok::lparen, "'('");
      const Token& id = expect(Tok::ident, "link id");
      auto link = topo_.find_link(id.text);
      if (!link) throw ParseError(ParseFailure::unknown_identifier, id.line, id.col, "unknown link '" + id.text + "'");
      c.link = *link;
      expect(Tok::rparen, "')'");
      c.strictness = relation();
      const Token& num = expect(Tok::number, "number");
      c.bound = number(num);
      if (!(c.bound > 0.0 && c.bound <= 1.0)) fail(num, "utilization bound must be in (0, 1]");
    } else {
      fail(head, "expected 'delay' or 'util' constraint");
    }
    return c;
  }

  std::vector<Token> toks_;
  const Topology& topo_;
  std::size_t pos_ = 0;
};

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

Intent parse_intent(std::string_view text, const Topology& topo) {
  return Parser(Lexer(text).run(), topo).run();
}

std::string to_text(const Intent& intent, const Topology& topo) {
  std::string out = "minimize ";
  out += intent.objective == ObjectiveKind::mean_delay ? "mean_delay" : "max_delay";
  out += '\n';
  for (const auto& c : intent.constraints) {
    const char* rel = c.strictness == Strictness::less ? " < " : " <= ";
    if (c.kind == ConstraintKind::pair_delay) {
      const auto [s, d] = topo.pair_at(c.pair);
      out += "delay(" + topo.node(topo.overlay_nodes()[s]).name + " -> " + topo.node(topo.overlay_nodes()[d]).name +
             ")" + rel + shortest(c.bound) + " s\n";
    } else {
      out += "util(" + topo.link_name(c.link) + ")" + rel + shortest(c.bound) + "\n";
    }
  }
  return out;
}

ObjectiveValue ObjectiveSpec::evaluate(const PathDelayVector& delays, const LinkLoadReport& loads) const {
  ObjectiveValue v;
  v.base = objective == ObjectiveKind::mean_delay ? delays.mean() : delays.max();
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const Constraint& c = constraints[i];
    ConstraintVerdict verdict;
    verdict.metric = c.kind == ConstraintKind::pair_delay ? delays.delay_s.at(c.pair) : loads.utilization.at(c.link);
    verdict.bound = c.bound;
    const double excess = std::max(0.0, verdict.metric - c.bound);
    verdict.penalty = weights[i] * excess * excess;
    verdict.satisfied = c.strictness == Strictness::less ? verdict.metric < c.bound : verdict.metric <= c.bound;
    v.penalty += verdict.penalty;
    v.verdicts.push_back(verdict);
  }
  v.total = v.base + v.penalty;
  return v;
}

ObjectiveSpec render(const Intent& intent, double penalty_weight) {
  ObjectiveSpec spec;
  spec.objective = intent.objective;
  spec.constraints = intent.constraints;
  spec.weights.assign(intent.constraints.size(), penalty_weight);
  return spec;
}

}  // namespace kdn

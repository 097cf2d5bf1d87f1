#include "finrag/dsl.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace finrag::dsl {

namespace {

constexpr std::array<std::string_view, kOpTokenCount> kOpTexts = {
    "EOF",       "UNK",          "GO",         ")",
    "add(",      "subtract(",    "multiply(",  "divide(",
    "exp(",      "greater(",     "table_sum(", "table_average(",
    "table_max(", "table_min(",
};

constexpr std::array<std::string_view, kConstTokenCount> kConstTexts = {
    "CONST_2",       "CONST_1",        "CONST_3",       "CONST_4",
    "CONST_5",       "CONST_6",        "CONST_7",       "CONST_8",
    "CONST_9",       "CONST_10",       "CONST_100",     "CONST_1000",
    "CONST_10000",   "CONST_100000",   "CONST_1000000", "CONST_10000000",
    "CONST_1000000000", "CONST_M1",
};

constexpr std::array<double, kConstTokenCount> kConstValues = {
    2, 1, 3, 4, 5, 6, 7, 8, 9, 10, 100, 1000, 10000, 100000, 1e6, 1e7, 1e9, -1,
};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

std::optional<double> parse_double_strict(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string_view op_token_text(OpToken op) { return kOpTexts[static_cast<size_t>(op)]; }

std::optional<OpToken> op_token_from_text(std::string_view text) {
  for (size_t i = 0; i < kOpTexts.size(); ++i) {
    if (text == kOpTexts[i]) return static_cast<OpToken>(i);
  }
  return std::nullopt;
}

bool is_callable(OpToken op) { return static_cast<int>(op) >= static_cast<int>(OpToken::Add); }

bool is_table_op(OpToken op) {
  return static_cast<int>(op) >= static_cast<int>(OpToken::TableSum);
}

std::string_view const_token_text(ConstToken c) { return kConstTexts[static_cast<size_t>(c)]; }

std::optional<ConstToken> const_token_from_text(std::string_view text) {
  for (size_t i = 0; i < kConstTexts.size(); ++i) {
    if (iequals(text, kConstTexts[i])) return static_cast<ConstToken>(i);
  }
  return std::nullopt;
}

double const_token_value(ConstToken c) { return kConstValues[static_cast<size_t>(c)]; }

std::string operand_text(const Operand& o) {
  if (const auto* lit = std::get_if<Literal>(&o)) return format_number(lit->value);
  if (const auto* c = std::get_if<ConstToken>(&o)) return std::string(const_token_text(*c));
  if (const auto* s = std::get_if<StepRef>(&o)) return "#" + std::to_string(s->index);
  if (const auto* r = std::get_if<RowName>(&o)) return r->name;
  return "none";
}

// ---------------------------------------------------------------------------
// parse / serialize

namespace {

class ProgramParser {
 public:
  explicit ProgramParser(std::string_view text) : text_(text) {}

  Program parse() {
    Program p;
    while (true) {
      p.steps.push_back(parse_step(p.steps.size()));
      if (p.steps.size() > static_cast<size_t>(kMaxProgramSteps)) {
        throw SyntaxError("program exceeds " + std::to_string(kMaxProgramSteps) + " steps");
      }
      skip_ws();
      if (pos_ >= text_.size()) break;
      expect(',');
    }
    return p;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) {
      throw SyntaxError("expected '" + std::string(1, c) + "' at offset " + std::to_string(pos_));
    }
    ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  ProgramStep parse_step(size_t step_index) {
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (pos_ >= text_.size() || text_[pos_] != '(') {
      throw SyntaxError("expected operation name at offset " + std::to_string(start));
    }
    ++pos_;  // consume '('
    std::string op_text(text_.substr(start, pos_ - start));
    auto op = op_token_from_text(op_text);
    if (!op || !is_callable(*op)) throw SyntaxError("unknown operation '" + op_text + "'");

    ProgramStep step;
    step.op = *op;
    step.args[0] = parse_operand(step_index, *op, /*first=*/true);
    if (peek() == ')') throw ArityError("operation '" + op_text + "' needs 2 operands, got 1");
    expect(',');
    step.args[1] = parse_operand(step_index, *op, /*first=*/false);
    if (peek() == ',') throw ArityError("operation '" + op_text + "' needs 2 operands, got more");
    expect(')');
    return step;
  }

  Operand parse_operand(size_t step_index, OpToken op, bool first) {
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ')') ++pos_;
    std::string raw = trim(text_.substr(start, pos_ - start));
    if (raw.empty()) throw SyntaxError("empty operand at offset " + std::to_string(start));

    if (is_table_op(op)) {
      if (first) return RowName{raw};
      if (iequals(raw, "none")) return NoneArg{};
      throw SyntaxError("table operations take 'none' as second operand, got '" + raw + "'");
    }

    if (raw[0] == '#') {
      auto idx = parse_double_strict(raw.substr(1));
      if (!idx || *idx != std::floor(*idx) || *idx < 0) {
        throw SyntaxError("malformed step reference '" + raw + "'");
      }
      int k = static_cast<int>(*idx);
      if (k > kMaxStepRef) {
        throw ReferenceError("step reference '" + raw + "' exceeds #" +
                             std::to_string(kMaxStepRef));
      }
      if (k >= static_cast<int>(step_index)) {
        throw ReferenceError("step reference '" + raw + "' in step " +
                             std::to_string(step_index) + " is not a prior step");
      }
      return StepRef{k};
    }
    if (auto c = const_token_from_text(raw)) return *c;
    if (iequals(raw, "none")) {
      throw SyntaxError("'none' is only valid as second operand of table operations");
    }
    if (auto num = parse_double_strict(raw)) return Literal{*num};
    throw SyntaxError("malformed number '" + raw + "'");
  }

  std::string_view text_;
  size_t pos_ = 0;
};

}  // namespace

Program parse_program(std::string_view text) {
  if (trim(text).empty()) throw SyntaxError("empty program");
  return ProgramParser(text).parse();
}

std::string serialize_program(const Program& p) {
  std::string out;
  for (size_t i = 0; i < p.steps.size(); ++i) {
    if (i > 0) out += ", ";
    const ProgramStep& s = p.steps[i];
    out += op_token_text(s.op);
    out += operand_text(s.args[0]);
    out += ", ";
    out += operand_text(s.args[1]);
    out += ")";
  }
  return out;
}

// ---------------------------------------------------------------------------
// vocabulary

ProgramVocabulary ProgramVocabulary::build(const std::vector<ContextNumber>& numbers,
                                           const std::vector<std::string>& row_names) {
  ProgramVocabulary v;
  for (int i = 0; i < kOpTokenCount; ++i) {
    v.entries_.push_back({TokenKind::Op, i, 0.0,
                          std::string(op_token_text(static_cast<OpToken>(i))), -1});
  }
  for (int i = 0; i < kConstTokenCount; ++i) {
    v.entries_.push_back({TokenKind::Const, i, const_token_value(static_cast<ConstToken>(i)),
                          std::string(const_token_text(static_cast<ConstToken>(i))), -1});
  }
  for (int k = 0; k <= kMaxStepRef; ++k) {
    v.entries_.push_back({TokenKind::Step, k, 0.0, "#" + std::to_string(k), -1});
  }
  v.context_numbers_ = numbers;
  for (size_t i = 0; i < numbers.size(); ++i) {
    v.input_indices_.push_back(v.entries_.size());
    v.entries_.push_back({TokenKind::Number, 0, numbers[i].value,
                          format_number(numbers[i].value), static_cast<int>(i)});
  }
  for (const auto& name : row_names) {
    v.input_indices_.push_back(v.entries_.size());
    v.row_indices_.push_back(v.entries_.size());
    v.entries_.push_back({TokenKind::Row, 0, 0.0, name, -1});
  }
  return v;
}

const VocabEntry& ProgramVocabulary::token_at(size_t index) const {
  if (index >= entries_.size()) {
    throw IndexError("token index " + std::to_string(index) + " out of range (size " +
                     std::to_string(entries_.size()) + ")");
  }
  return entries_[index];
}

std::optional<size_t> ProgramVocabulary::index_of(std::string_view token_text) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].kind == TokenKind::Const) {
      if (iequals(entries_[i].text, token_text)) return i;
    } else if (entries_[i].text == token_text) {
      return i;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// mask automaton

namespace {

enum class Phase { Boundary, AfterOp, AfterArg1, AfterRow, AfterArg2, Done };

struct MaskState {
  Phase phase = Phase::Boundary;
  int completed = 0;
  bool table = false;
};

// Advances the automaton by one token; throws InvalidPrefixError on violation.
void advance(const ProgramVocabulary& v, MaskState& st, size_t tok) {
  if (tok >= v.size()) throw InvalidPrefixError("token index out of range");
  const VocabEntry& e = v.token_at(tok);
  auto fail = [&](const char* why) {
    throw InvalidPrefixError(std::string(why) + " (token '" + e.text + "' after " +
                             std::to_string(st.completed) + " steps)");
  };
  switch (st.phase) {
    case Phase::Boundary: {
      if (e.kind != TokenKind::Op) fail("expected operation or EOF");
      auto op = static_cast<OpToken>(e.op_or_const);
      if (op == OpToken::Eof) {
        if (st.completed < 1) fail("empty program");
        st.phase = Phase::Done;
        return;
      }
      if (!is_callable(op)) fail("expected operation or EOF");
      if (st.completed >= kMaxProgramSteps) fail("program already at step limit");
      if (is_table_op(op) && !v.has_rows()) fail("table operation without table rows");
      st.table = is_table_op(op);
      st.phase = Phase::AfterOp;
      return;
    }
    case Phase::AfterOp:
    case Phase::AfterArg1: {
      if (st.table) {
        if (st.phase != Phase::AfterOp) fail("internal state");
        if (e.kind != TokenKind::Row) fail("table operation expects a row name");
        st.phase = Phase::AfterRow;
        return;
      }
      bool ok = e.kind == TokenKind::Number || e.kind == TokenKind::Const ||
                (e.kind == TokenKind::Step && e.op_or_const < st.completed);
      if (!ok) fail("expected a numeric operand");
      st.phase = (st.phase == Phase::AfterOp) ? Phase::AfterArg1 : Phase::AfterArg2;
      return;
    }
    case Phase::AfterRow:
    case Phase::AfterArg2: {
      if (e.kind != TokenKind::Op ||
          static_cast<OpToken>(e.op_or_const) != OpToken::CloseParen) {
        fail("expected ')'");
      }
      st.completed += 1;
      st.phase = Phase::Boundary;
      return;
    }
    case Phase::Done:
      fail("tokens after EOF");
  }
}

MaskState replay(const ProgramVocabulary& v, const std::vector<size_t>& prefix) {
  if (prefix.empty() || prefix[0] != v.go_index()) {
    throw InvalidPrefixError("prefix must begin with GO");
  }
  MaskState st;
  for (size_t i = 1; i < prefix.size(); ++i) advance(v, st, prefix[i]);
  return st;
}

}  // namespace

std::vector<size_t> valid_next_tokens(const ProgramVocabulary& v,
                                      const std::vector<size_t>& prefix) {
  MaskState st = replay(v, prefix);
  std::vector<size_t> out;
  switch (st.phase) {
    case Phase::Boundary:
      if (st.completed < kMaxProgramSteps) {
        for (int i = 0; i < kOpTokenCount; ++i) {
          auto op = static_cast<OpToken>(i);
          if (!is_callable(op)) continue;
          if (is_table_op(op) && !v.has_rows()) continue;
          out.push_back(v.op_index(op));
        }
      }
      if (st.completed >= 1) out.push_back(v.eof_index());
      break;
    case Phase::AfterOp:
    case Phase::AfterArg1:
      if (st.table) {
        out = v.row_indices();
      } else {
        for (size_t i = 0; i < v.size(); ++i) {
          const VocabEntry& e = v.token_at(i);
          if (e.kind == TokenKind::Number || e.kind == TokenKind::Const ||
              (e.kind == TokenKind::Step && e.op_or_const < st.completed)) {
            out.push_back(i);
          }
        }
      }
      break;
    case Phase::AfterRow:
    case Phase::AfterArg2:
      out.push_back(v.op_index(OpToken::CloseParen));
      break;
    case Phase::Done:
      break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// program <-> token sequence

namespace {

void validate_program(const Program& p) {
  if (p.steps.empty()) throw SyntaxError("empty program");
  if (p.steps.size() > static_cast<size_t>(kMaxProgramSteps)) {
    throw SyntaxError("program exceeds " + std::to_string(kMaxProgramSteps) + " steps");
  }
  for (size_t n = 0; n < p.steps.size(); ++n) {
    const ProgramStep& s = p.steps[n];
    if (!is_callable(s.op)) throw SyntaxError("step op is not callable");
    for (int a = 0; a < 2; ++a) {
      if (const auto* ref = std::get_if<StepRef>(&s.args[a])) {
        if (ref->index > kMaxStepRef) throw ReferenceError("step reference exceeds #10");
        if (ref->index >= static_cast<int>(n)) {
          throw ReferenceError("step reference #" + std::to_string(ref->index) +
                               " in step " + std::to_string(n) + " is not a prior step");
        }
      }
      bool row = std::holds_alternative<RowName>(s.args[a]);
      bool none = std::holds_alternative<NoneArg>(s.args[a]);
      if (is_table_op(s.op)) {
        if (a == 0 && !row) throw SyntaxError("table operation expects a row name first");
        if (a == 1 && !none) throw SyntaxError("table operation expects 'none' second");
      } else if (row || none) {
        throw SyntaxError("row/none operands only appear in table operations");
      }
    }
  }
}

}  // namespace

std::vector<size_t> encode_program(const ProgramVocabulary& v, const Program& p,
                                   bool allow_unk) {
  validate_program(p);
  auto resolve = [&](const Operand& o) -> std::optional<size_t> {
    if (const auto* lit = std::get_if<Literal>(&o)) {
      for (size_t i = 0; i < v.size(); ++i) {
        const VocabEntry& e = v.token_at(i);
        if (e.kind == TokenKind::Number && e.value == lit->value) return i;
      }
      // gold programs sometimes spell constants as plain numbers ("100")
      for (int c = 0; c < kConstTokenCount; ++c) {
        if (const_token_value(static_cast<ConstToken>(c)) == lit->value) {
          return v.const_index(static_cast<ConstToken>(c));
        }
      }
      return std::nullopt;
    }
    if (const auto* c = std::get_if<ConstToken>(&o)) return v.const_index(*c);
    if (const auto* s = std::get_if<StepRef>(&o)) return v.step_index(s->index);
    if (const auto* r = std::get_if<RowName>(&o)) {
      for (size_t i : v.row_indices()) {
        if (v.token_at(i).text == r->name) return i;
      }
      return std::nullopt;
    }
    return std::nullopt;  // NoneArg has no token
  };

  std::vector<size_t> out;
  for (const ProgramStep& s : p.steps) {
    out.push_back(v.op_index(s.op));
    int argc = is_table_op(s.op) ? 1 : 2;
    for (int a = 0; a < argc; ++a) {
      auto idx = resolve(s.args[a]);
      if (!idx) {
        if (!allow_unk) {
          throw SyntaxError("operand '" + operand_text(s.args[a]) +
                            "' has no vocabulary entry");
        }
        idx = v.unk_index();
      }
      out.push_back(*idx);
    }
    out.push_back(v.op_index(OpToken::CloseParen));
  }
  out.push_back(v.eof_index());
  return out;
}

Program tokens_to_program(const ProgramVocabulary& v, const std::vector<size_t>& tokens) {
  Program p;
  MaskState st;
  ProgramStep cur;
  auto operand_of = [&](const VocabEntry& e) -> Operand {
    switch (e.kind) {
      case TokenKind::Number: return Literal{e.value};
      case TokenKind::Const: return static_cast<ConstToken>(e.op_or_const);
      case TokenKind::Step: return StepRef{e.op_or_const};
      case TokenKind::Row: return RowName{e.text};
      default: throw InvalidPrefixError("operand token expected, got '" + e.text + "'");
    }
  };
  for (size_t tok : tokens) {
    Phase before = st.phase;
    advance(v, st, tok);
    const VocabEntry& e = v.token_at(tok);
    switch (before) {
      case Phase::Boundary:
        if (st.phase == Phase::Done) break;
        cur = ProgramStep{};
        cur.op = static_cast<OpToken>(e.op_or_const);
        if (is_table_op(cur.op)) cur.args[1] = NoneArg{};
        break;
      case Phase::AfterOp:
        cur.args[0] = operand_of(e);
        break;
      case Phase::AfterArg1:
        cur.args[1] = operand_of(e);
        break;
      case Phase::AfterRow:
      case Phase::AfterArg2:
        p.steps.push_back(cur);
        break;
      case Phase::Done:
        break;
    }
  }
  if (st.phase != Phase::Done) throw InvalidPrefixError("token sequence does not end with EOF");
  return p;
}

}  // namespace finrag::dsl

#pragma once

// Shared test-only machinery: random contexts, mask-guided random program
// walks, and an independent brute-force interpreter used as the executor
// oracle. The oracle inlines step references into an expression tree and
// evaluates recursively; it shares no code with the library's executor.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "finrag/common.hpp"
#include "finrag/dsl.hpp"
#include "finrag/executor.hpp"

namespace finrag::testsupport {

struct RandomContext {
  dsl::ProgramVocabulary vocab;
  executor::TableContext table;
};

inline RandomContext random_context(Rng& rng, bool allow_rows = true) {
  RandomContext out;
  int n = rng.uniform_int(2, 7);
  std::vector<dsl::ContextNumber> numbers;
  size_t offset = 0;
  for (int i = 0; i < n; ++i) {
    double value;
    switch (rng.uniform_int(0, 3)) {
      case 0: value = rng.uniform_int(-1000, 1000); break;
      case 1: value = rng.uniform(-100.0, 100.0); break;
      case 2: value = rng.uniform_int(0, 1) ? 0.0 : rng.uniform_int(1, 9999); break;
      default: value = rng.uniform(0.0, 1.0); break;
    }
    std::string raw = format_number(value);
    numbers.push_back({value, "text_0", offset, offset + raw.size(), raw});
    offset += raw.size() + 1;
  }
  std::vector<std::string> rows;
  if (allow_rows && rng.uniform_int(0, 2) > 0) {
    int r = rng.uniform_int(1, 3);
    const char* names[] = {"net revenue", "operating cost", "total backlog"};
    for (int i = 0; i < r; ++i) {
      rows.push_back(names[i]);
      std::vector<double> cells;
      int c = rng.uniform_int(1, 4);
      for (int j = 0; j < c; ++j) cells.push_back(rng.uniform_int(-50, 500));
      out.table.add_row(names[i], cells);
    }
  }
  out.vocab = dsl::ProgramVocabulary::build(numbers, rows);
  return out;
}

// Random walk through valid_next_tokens from GO to EOF; the returned
// sequence excludes GO and includes EOF.
inline std::vector<size_t> random_walk_tokens(const dsl::ProgramVocabulary& vocab, Rng& rng) {
  std::vector<size_t> prefix{vocab.go_index()};
  while (true) {
    auto valid = dsl::valid_next_tokens(vocab, prefix);
    size_t pick;
    auto eof_it = std::find(valid.begin(), valid.end(), vocab.eof_index());
    if (eof_it != valid.end() && rng.uniform() < 0.35) {
      pick = vocab.eof_index();
    } else {
      pick = valid[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(valid.size()) - 1))];
    }
    prefix.push_back(pick);
    if (pick == vocab.eof_index()) break;
  }
  return std::vector<size_t>(prefix.begin() + 1, prefix.end());
}

inline dsl::Program random_program(const dsl::ProgramVocabulary& vocab, Rng& rng) {
  return dsl::tokens_to_program(vocab, random_walk_tokens(vocab, rng));
}

// ---------------------------------------------------------------------------
// brute-force oracle

struct OracleOutcome {
  std::vector<executor::Value> step_values;
  std::optional<std::string> error_kind;  // matches ExecError::kind()
};

namespace oracle_detail {

struct OracleError {
  std::string kind;
  explicit OracleError(std::string k) : kind(std::move(k)) {}
};

inline double want_number(const executor::Value& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  throw OracleError("type_mismatch");
}

inline executor::Value eval_tree(const dsl::Program& p, size_t step,
                                 const executor::TableContext& table);

inline double operand_value(const dsl::Program& p, const dsl::Operand& o,
                            const executor::TableContext& table) {
  if (const auto* lit = std::get_if<dsl::Literal>(&o)) return lit->value;
  if (const auto* c = std::get_if<dsl::ConstToken>(&o)) return dsl::const_token_value(*c);
  if (const auto* s = std::get_if<dsl::StepRef>(&o)) {
    return want_number(eval_tree(p, s->index, table));
  }
  throw OracleError("type_mismatch");
}

inline executor::Value eval_tree(const dsl::Program& p, size_t step,
                                 const executor::TableContext& table) {
  const dsl::ProgramStep& s = p.steps[step];
  if (dsl::is_table_op(s.op)) {
    const auto* row = std::get_if<dsl::RowName>(&s.args[0]);
    if (!row) throw OracleError("type_mismatch");
    if (!table.has_row(row->name)) throw OracleError("missing_row");
    const auto& cells = table.row(row->name);
    if (cells.empty()) throw OracleError("overflow");
    double agg;
    if (s.op == dsl::OpToken::TableSum || s.op == dsl::OpToken::TableAverage) {
      agg = 0.0;
      for (double c : cells) agg += c;
      if (s.op == dsl::OpToken::TableAverage) agg /= static_cast<double>(cells.size());
    } else {
      agg = cells[0];
      for (double c : cells) {
        if (s.op == dsl::OpToken::TableMax ? c > agg : c < agg) agg = c;
      }
    }
    if (!std::isfinite(agg)) throw OracleError("overflow");
    return agg;
  }
  double a = operand_value(p, s.args[0], table);
  double b = operand_value(p, s.args[1], table);
  if (s.op == dsl::OpToken::Greater) return a > b;
  double r;
  switch (s.op) {
    case dsl::OpToken::Add: r = a + b; break;
    case dsl::OpToken::Subtract: r = a - b; break;
    case dsl::OpToken::Multiply: r = a * b; break;
    case dsl::OpToken::Divide:
      if (b == 0.0) throw OracleError("division_by_zero");
      r = a / b;
      break;
    case dsl::OpToken::Exp: r = std::pow(a, b); break;
    default: throw OracleError("type_mismatch");
  }
  if (!std::isfinite(r)) throw OracleError("overflow");
  return r;
}

}  // namespace oracle_detail

inline OracleOutcome oracle_execute(const dsl::Program& p, const executor::TableContext& table) {
  OracleOutcome out;
  try {
    for (size_t i = 0; i < p.steps.size(); ++i) {
      out.step_values.push_back(oracle_detail::eval_tree(p, i, table));
    }
  } catch (const oracle_detail::OracleError& e) {
    out.error_kind = e.kind;
  }
  return out;
}

inline OracleOutcome run_executor(const dsl::Program& p, const executor::TableContext& table) {
  OracleOutcome out;
  try {
    out.step_values = executor::execute_program(p, table).step_values;
  } catch (const executor::ExecError& e) {
    out.error_kind = e.kind();
  }
  return out;
}

inline bool outcomes_equal(const OracleOutcome& a, const OracleOutcome& b) {
  if (a.error_kind.has_value() != b.error_kind.has_value()) return false;
  if (a.error_kind) return *a.error_kind == *b.error_kind;
  if (a.step_values.size() != b.step_values.size()) return false;
  for (size_t i = 0; i < a.step_values.size(); ++i) {
    if (a.step_values[i] != b.step_values[i]) return false;
  }
  return true;
}

}  // namespace finrag::testsupport

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "finrag/common.hpp"

namespace finrag::dsl {

class DslError : public Error {
 public:
  using Error::Error;
};
// Unbalanced parenthesis, unknown op name, malformed number, length cap.
class SyntaxError : public DslError {
 public:
  explicit SyntaxError(const std::string& msg) : DslError("syntax", msg) {}
};
// Step reference at or past the current step, or past #10.
class ReferenceError : public DslError {
 public:
  explicit ReferenceError(const std::string& msg) : DslError("reference", msg) {}
};
// A step with other than two operands.
class ArityError : public DslError {
 public:
  explicit ArityError(const std::string& msg) : DslError("arity", msg) {}
};
class IndexError : public DslError {
 public:
  explicit IndexError(const std::string& msg) : DslError("index", msg) {}
};
class InvalidPrefixError : public DslError {
 public:
  explicit InvalidPrefixError(const std::string& msg) : DslError("invalid_prefix", msg) {}
};

// The 14 structural/operation tokens, in canonical order.
enum class OpToken {
  Eof,
  Unk,
  Go,
  CloseParen,
  Add,
  Subtract,
  Multiply,
  Divide,
  Exp,
  Greater,
  TableSum,
  TableAverage,
  TableMax,
  TableMin,
};
inline constexpr int kOpTokenCount = 14;
inline constexpr int kCallableOpCount = 10;  // Add .. TableMin

std::string_view op_token_text(OpToken op);
std::optional<OpToken> op_token_from_text(std::string_view text);
bool is_callable(OpToken op);
bool is_table_op(OpToken op);

// The 18 predeclared constants, in canonical order.
enum class ConstToken {
  Const2,
  Const1,
  Const3,
  Const4,
  Const5,
  Const6,
  Const7,
  Const8,
  Const9,
  Const10,
  Const100,
  Const1000,
  Const10000,
  Const100000,
  Const1000000,
  Const10000000,
  Const1000000000,
  ConstM1,
};
inline constexpr int kConstTokenCount = 18;

std::string_view const_token_text(ConstToken c);
std::optional<ConstToken> const_token_from_text(std::string_view text);  // case-insensitive
double const_token_value(ConstToken c);

// Result of the n-th prior step, #0 .. #10.
struct StepRef {
  int index = 0;
  bool operator==(const StepRef&) const = default;
};
inline constexpr int kMaxStepRef = 10;
inline constexpr int kMaxProgramSteps = kMaxStepRef + 1;

struct Literal {
  double value = 0.0;
  bool operator==(const Literal&) const = default;
};
struct RowName {
  std::string name;
  bool operator==(const RowName&) const = default;
};
// Second operand of table operations; rendered as "none".
struct NoneArg {
  bool operator==(const NoneArg&) const = default;
};

using Operand = std::variant<Literal, ConstToken, StepRef, RowName, NoneArg>;

std::string operand_text(const Operand& o);

struct ProgramStep {
  OpToken op = OpToken::Add;
  Operand args[2];
  bool operator==(const ProgramStep& other) const {
    return op == other.op && args[0] == other.args[0] && args[1] == other.args[1];
  }
};

struct Program {
  std::vector<ProgramStep> steps;
  bool operator==(const Program&) const = default;
};

// program := step ("," step)* ; step := OP "(" operand "," operand ")"
Program parse_program(std::string_view text);
std::string serialize_program(const Program& p);

// One number found in a context sentence, with provenance.
struct ContextNumber {
  double value = 0.0;
  std::string sentence_id;
  size_t span_begin = 0;
  size_t span_end = 0;
  std::string raw;
};

enum class TokenKind { Op, Const, Step, Number, Row };

struct VocabEntry {
  TokenKind kind;
  int op_or_const = 0;   // OpToken / ConstToken ordinal, or StepRef index
  double value = 0.0;    // Number entries
  std::string text;      // canonical token text (row header for Row entries)
  int context_pos = -1;  // position within the context-number list, -1 otherwise
};

// Candidate-token vocabulary for one question: 14 ops, 18 constants,
// #0..#10, then the context numbers in sentence/span order, then table
// row headers. Indices are dense from 0.
class ProgramVocabulary {
 public:
  static ProgramVocabulary build(const std::vector<ContextNumber>& numbers,
                                 const std::vector<std::string>& row_names = {});

  size_t size() const { return entries_.size(); }
  const VocabEntry& token_at(size_t index) const;
  const std::vector<VocabEntry>& entries() const { return entries_; }
  const std::vector<ContextNumber>& context_numbers() const { return context_numbers_; }

  // First entry whose canonical text matches (constants case-insensitive).
  std::optional<size_t> index_of(std::string_view token_text) const;

  size_t op_index(OpToken op) const { return static_cast<size_t>(op); }
  size_t const_index(ConstToken c) const { return kOpTokenCount + static_cast<size_t>(c); }
  size_t step_index(int k) const { return kOpTokenCount + kConstTokenCount + k; }
  size_t go_index() const { return op_index(OpToken::Go); }
  size_t eof_index() const { return op_index(OpToken::Eof); }
  size_t unk_index() const { return op_index(OpToken::Unk); }

  // Indices of context-number and row entries, in vocabulary order.
  const std::vector<size_t>& input_indices() const { return input_indices_; }
  const std::vector<size_t>& row_indices() const { return row_indices_; }
  bool has_rows() const { return !row_indices_.empty(); }

 private:
  std::vector<VocabEntry> entries_;
  std::vector<ContextNumber> context_numbers_;
  std::vector<size_t> input_indices_;
  std::vector<size_t> row_indices_;
};

// Token indices that may legally extend `prefix` (which must begin with GO).
// Table steps are three tokens in index space: op, row, ")"; the serializer
// inserts the "none" placeholder. UNK and GO are never proposed.
std::vector<size_t> valid_next_tokens(const ProgramVocabulary& v,
                                      const std::vector<size_t>& prefix);

// Program <-> token index sequence. Sequences exclude the leading GO and
// include the trailing EOF. encode maps each number literal to the first
// vocabulary entry with the same value; without allow_unk an unmappable
// token raises SyntaxError, with it the token becomes UNK.
std::vector<size_t> encode_program(const ProgramVocabulary& v, const Program& p,
                                   bool allow_unk = false);
Program tokens_to_program(const ProgramVocabulary& v, const std::vector<size_t>& tokens);

}  // namespace finrag::dsl

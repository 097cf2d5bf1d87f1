#pragma once

#include <string>
#include <variant>
#include <vector>

#include "finrag/common.hpp"
#include "finrag/dsl.hpp"

namespace finrag::executor {

class ExecError : public Error {
 public:
  enum class Kind { DivisionByZero, MissingRow, TypeMismatch, Overflow };
  ExecError(Kind kind, const std::string& msg) : Error(kind_tag(kind), msg), kind_(kind) {}
  Kind exec_kind() const { return kind_; }

 private:
  static std::string kind_tag(Kind k) {
    switch (k) {
      case Kind::DivisionByZero: return "division_by_zero";
      case Kind::MissingRow: return "missing_row";
      case Kind::TypeMismatch: return "type_mismatch";
      case Kind::Overflow: return "overflow";
    }
    return "exec";
  }
  Kind kind_;
};

// Numeric cells of the linearized table, addressable by row header.
class TableContext {
 public:
  TableContext() = default;

  // Keeps the first row on duplicate headers; empty headers are not addressable.
  void add_row(const std::string& header, std::vector<double> cells);
  bool has_row(const std::string& header) const;
  const std::vector<double>& row(const std::string& header) const;  // MissingRow
  std::vector<std::string> row_names() const;
  size_t size() const { return rows_.size(); }

 private:
  std::vector<std::pair<std::string, std::vector<double>>> rows_;
};

// A step value is a number or a yes/no truth value (from greater().
using Value = std::variant<double, bool>;

// Operand after resolution: a number, a prior step's value, the row name of
// a table operation, or the table placeholder.
using ResolvedArg = std::variant<double, bool, dsl::RowName, dsl::NoneArg>;

struct ExecutionResult {
  std::vector<Value> step_values;
  const Value& final_value() const { return step_values.back(); }
  bool is_boolean() const { return std::holds_alternative<bool>(final_value()); }
  double number() const { return std::get<double>(final_value()); }
  // "yes"/"no" for booleans, canonical decimal otherwise.
  std::string answer_text() const;
};

double resolve_constant(dsl::ConstToken c);

Value eval_step(dsl::OpToken op, const ResolvedArg& a, const ResolvedArg& b,
                const TableContext& table);

ExecutionResult execute_program(const dsl::Program& p, const TableContext& table);

}  // namespace finrag::executor

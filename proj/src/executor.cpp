#include "finrag/executor.hpp"

#include <algorithm>
#include <cmath>

namespace finrag::executor {

using dsl::OpToken;

void TableContext::add_row(const std::string& header, std::vector<double> cells) {
  if (header.empty() || has_row(header)) return;
  rows_.emplace_back(header, std::move(cells));
}

bool TableContext::has_row(const std::string& header) const {
  for (const auto& [name, _] : rows_) {
    if (name == header) return true;
  }
  return false;
}

const std::vector<double>& TableContext::row(const std::string& header) const {
  for (const auto& [name, cells] : rows_) {
    if (name == header) return cells;
  }
  throw ExecError(ExecError::Kind::MissingRow, "table has no row '" + header + "'");
}

std::vector<std::string> TableContext::row_names() const {
  std::vector<std::string> out;
  out.reserve(rows_.size());
  for (const auto& [name, _] : rows_) out.push_back(name);
  return out;
}

std::string ExecutionResult::answer_text() const {
  if (is_boolean()) return std::get<bool>(final_value()) ? "yes" : "no";
  return format_number(number());
}

double resolve_constant(dsl::ConstToken c) { return dsl::const_token_value(c); }

namespace {

double as_number(const ResolvedArg& v, const char* role) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  if (std::holds_alternative<bool>(v)) {
    throw ExecError(ExecError::Kind::TypeMismatch,
                    std::string("yes/no value used as ") + role);
  }
  throw ExecError(ExecError::Kind::TypeMismatch,
                  std::string("row operand used as ") + role);
}

double check_finite(double v, OpToken op) {
  if (!std::isfinite(v)) {
    throw ExecError(ExecError::Kind::Overflow,
                    "non-finite result of " + std::string(dsl::op_token_text(op)) + ")");
  }
  return v;
}

double aggregate_row(OpToken op, const std::string& name, const TableContext& table) {
  const std::vector<double>& cells = table.row(name);
  if (cells.empty()) {
    throw ExecError(ExecError::Kind::Overflow, "row '" + name + "' has no numeric cells");
  }
  switch (op) {
    case OpToken::TableSum: {
      double s = 0.0;
      for (double c : cells) s += c;
      return s;
    }
    case OpToken::TableAverage: {
      double s = 0.0;
      for (double c : cells) s += c;
      return s / static_cast<double>(cells.size());
    }
    case OpToken::TableMax: return *std::max_element(cells.begin(), cells.end());
    case OpToken::TableMin: return *std::min_element(cells.begin(), cells.end());
    default: break;
  }
  throw ExecError(ExecError::Kind::TypeMismatch, "not a table operation");
}

}  // namespace

Value eval_step(OpToken op, const ResolvedArg& a, const ResolvedArg& b,
                const TableContext& table) {
  if (dsl::is_table_op(op)) {
    const auto* row = std::get_if<dsl::RowName>(&a);
    if (!row) {
      throw ExecError(ExecError::Kind::TypeMismatch,
                      "table operation expects a row name first");
    }
    (void)b;  // placeholder operand
    return check_finite(aggregate_row(op, row->name, table), op);
  }

  double x = as_number(a, "numeric operand");
  double y = as_number(b, "numeric operand");
  switch (op) {
    case OpToken::Add: return check_finite(x + y, op);
    case OpToken::Subtract: return check_finite(x - y, op);
    case OpToken::Multiply: return check_finite(x * y, op);
    case OpToken::Divide:
      if (y == 0.0) {
        throw ExecError(ExecError::Kind::DivisionByZero,
                        "division by zero (" + format_number(x) + " / 0)");
      }
      return check_finite(x / y, op);
    case OpToken::Exp: return check_finite(std::pow(x, y), op);
    case OpToken::Greater: return x > y;
    default: break;
  }
  throw ExecError(ExecError::Kind::TypeMismatch, "op is not callable");
}

ExecutionResult execute_program(const dsl::Program& p, const TableContext& table) {
  ExecutionResult result;
  auto resolve = [&](const dsl::Operand& o) -> ResolvedArg {
    if (const auto* lit = std::get_if<dsl::Literal>(&o)) return lit->value;
    if (const auto* c = std::get_if<dsl::ConstToken>(&o)) return dsl::const_token_value(*c);
    if (const auto* s = std::get_if<dsl::StepRef>(&o)) {
      if (s->index < 0 || static_cast<size_t>(s->index) >= result.step_values.size()) {
        throw dsl::ReferenceError("step reference #" + std::to_string(s->index) +
                                  " out of range");
      }
      const Value& v = result.step_values[s->index];
      if (const double* d = std::get_if<double>(&v)) return *d;
      return std::get<bool>(v);
    }
    if (const auto* r = std::get_if<dsl::RowName>(&o)) return *r;
    return dsl::NoneArg{};
  };

  for (const dsl::ProgramStep& step : p.steps) {
    result.step_values.push_back(
        eval_step(step.op, resolve(step.args[0]), resolve(step.args[1]), table));
  }
  if (result.step_values.empty()) {
    throw ExecError(ExecError::Kind::TypeMismatch, "empty program");
  }
  return result;
}

}  // namespace finrag::executor

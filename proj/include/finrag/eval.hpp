#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finrag/dsl.hpp"
#include "finrag/llmgen.hpp"
#include "finrag/preprocess.hpp"

namespace finrag::eval {

// What a generator produced for one record: a program, a free-form answer,
// or a failure kind when generation itself failed.
struct Prediction {
  std::optional<dsl::Program> program;
  std::optional<std::string> answer_text;
  std::optional<std::string> failure;

  static Prediction from_program(dsl::Program p) { return {std::move(p), {}, {}}; }
  static Prediction from_answer(std::string a) { return {{}, std::move(a), {}}; }
  static Prediction failed(std::string kind) { return {{}, {}, std::move(kind)}; }
};

struct RecordOutcome {
  std::string id;
  bool execution_correct = false;
  std::optional<bool> program_correct;  // only for program predictions
  std::optional<std::string> failure;
};

// Executes/parses predictions and compares against gold answers at epsilon.
// Execution errors never abort; they mark the record incorrect.
std::vector<RecordOutcome> judge_records(const std::vector<preprocess::QARecord>& records,
                                         const std::vector<Prediction>& predictions,
                                         double epsilon);

// matches / total; nullopt over an empty set.
std::optional<double> execution_accuracy(const std::vector<preprocess::QARecord>& records,
                                         const std::vector<Prediction>& predictions,
                                         double epsilon);

// Step-for-step match: same ops, same operand kinds/values (literals at
// 1e-6 relative tolerance), no commutative reordering.
bool program_match(const dsl::Program& predicted, const dsl::Program& gold);

std::optional<double> program_accuracy(const std::vector<preprocess::QARecord>& records,
                                       const std::vector<Prediction>& predictions);

struct SubsetRules {
  size_t long_context_token_threshold = 687;  // dataset mean question length
  // Classify modality from retrieved fact ids instead of gold facts.
  bool modality_from_retrieved = false;
};

struct SubsetSplit {
  // subset name -> record ids; three independent partitions:
  // modality, context length, reasoning steps.
  std::map<std::string, std::vector<std::string>> subsets;
  std::vector<std::pair<std::string, std::string>> excluded;  // (id, reason)
};

SubsetSplit split_subsets(const std::vector<preprocess::QARecord>& records,
                          const SubsetRules& rules,
                          const std::map<std::string, std::vector<std::string>>*
                              retrieved_ids = nullptr);

struct SubsetStats {
  size_t count = 0;
  std::optional<double> execution_accuracy;
  std::optional<double> program_accuracy;
};

struct EvalReport {
  size_t evaluated = 0;
  std::optional<double> execution_accuracy;
  std::optional<double> program_accuracy;
  std::map<std::string, SubsetStats> per_subset;
  std::map<std::string, std::string> config_echo;
  std::vector<std::pair<std::string, std::string>> failures;  // (record id, kind)
};

EvalReport make_report(const std::vector<preprocess::QARecord>& records,
                       const std::vector<Prediction>& predictions, double epsilon,
                       const SubsetRules& rules,
                       const std::map<std::string, std::string>& config_echo,
                       const std::map<std::string, std::vector<std::string>>*
                           retrieved_ids = nullptr);

enum class ReportFormat { Json, Csv };

// Byte-stable for identical inputs.
void emit_report(const EvalReport& report, ReportFormat format, const std::string& path);
std::string render_report(const EvalReport& report, ReportFormat format);
EvalReport parse_report_json(const std::string& text);

}  // namespace finrag::eval

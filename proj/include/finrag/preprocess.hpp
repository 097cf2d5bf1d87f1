#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finrag/common.hpp"
#include "finrag/executor.hpp"

namespace finrag::preprocess {

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};
class SchemaError : public Error {
 public:
  SchemaError(size_t record_index, const std::string& field_path, const std::string& msg)
      : Error("schema", "record " + std::to_string(record_index) + ": " + field_path + ": " + msg),
        record_index(record_index),
        field_path(field_path) {}
  size_t record_index;
  std::string field_path;
};
class TableError : public Error {
 public:
  enum class Kind { Empty, Ragged };
  TableError(Kind kind, const std::string& msg)
      : Error(kind == Kind::Empty ? "empty_table" : "ragged_table", msg), kind_(kind) {}
  Kind table_kind() const { return kind_; }

 private:
  Kind kind_;
};

// One dataset entry. Sentence ids: "text_<i>" over pre_text then post_text,
// "table_<r>_<c>" over 0-based data rows/columns (header row excluded).
struct QARecord {
  std::string id;
  std::string question;
  std::vector<std::string> pre_text;
  std::vector<std::string> post_text;
  std::vector<std::vector<std::string>> table;  // first row is the header row
  std::vector<std::string> gold_facts;          // sentence/cell ids, sorted unique
  std::string gold_program;
  std::string gold_answer;
  std::map<std::string, std::string> metadata;
};

struct LoadFailure {
  size_t record_index;
  std::string message;
};

struct LoadResult {
  std::vector<QARecord> records;
  std::vector<LoadFailure> failures;  // per-record schema/program problems
};

// Reads a JSON array of records. Malformed records are reported in
// `failures` without aborting the batch; an unreadable file or a non-array
// document raises IoError / SchemaError.
LoadResult load_dataset(const std::string& path);

struct ExtractedNumber {
  double value = 0.0;
  std::string sentence_id;
  size_t span_begin = 0;
  size_t span_end = 0;
  std::string raw;
};

// Finds decimal literals with optional $ prefix, % suffix, thousands commas,
// and parenthesized accounting negatives; ordered by span start. "5%" -> 5,
// "(720)" -> -720, "$7,680" -> 7680.
std::vector<ExtractedNumber> extract_numbers(const std::string& sentence,
                                             const std::string& sentence_id);

struct TableTemplates {
  // Placeholders: {row}, {col}, {cell}.
  std::string cell_sentence = "{row} of {col} is {cell}.";
};

struct TableSentence {
  std::string id;  // "table_<r>_<c>"
  std::string text;
  std::string row_header;  // "row N" when the header cell is empty
  size_t row = 0;          // 0-based data row
  size_t col = 0;          // 0-based data column
};

struct LinearizedTable {
  std::vector<TableSentence> sentences;
  executor::TableContext context;
};

// One sentence per (data row, data column) cell; simultaneously collects the
// numeric cells of each row into a TableContext.
LinearizedTable linearize_table(const std::vector<std::vector<std::string>>& table,
                                const TableTemplates& templates = {});

struct GeneratorInput {
  // sentences[0] is the question (possibly hard-truncated).
  std::vector<std::string> sentences;
  bool truncated = false;
  size_t token_count = 0;
};

struct RankedSentence {
  std::string id;
  double score = 0.0;
  std::string text;
};

// Question, then internal facts in rank order, then external facts, fitted
// to `budget` whitespace tokens: whole trailing sentences are dropped first,
// then the first dropped sentence is cut to the remaining budget.
GeneratorInput make_generator_input(const QARecord& record,
                                    const std::vector<RankedSentence>& internal,
                                    const std::vector<RankedSentence>& external,
                                    size_t budget);

// All retrievable sentences of a record: texts then linearized table cells.
std::vector<RankedSentence> record_sentences(const QARecord& record,
                                             const TableTemplates& templates = {});

}  // namespace finrag::preprocess

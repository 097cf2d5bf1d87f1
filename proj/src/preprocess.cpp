#include "finrag/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "json.hpp"

#include "finrag/dsl.hpp"

namespace finrag::preprocess {

using nlohmann::json;

// ---------------------------------------------------------------------------
// number extraction

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Matches digits with optional 3-digit comma groups and a decimal part,
// starting at `i`. Returns one past the end, or `i` if no match.
size_t match_number_core(const std::string& s, size_t i) {
  size_t j = i;
  if (j < s.size() && is_digit(s[j])) {
    while (j < s.size() && is_digit(s[j])) ++j;
    while (j + 3 < s.size() && s[j] == ',' && is_digit(s[j + 1]) && is_digit(s[j + 2]) &&
           is_digit(s[j + 3]) && (j + 4 >= s.size() || !is_digit(s[j + 4]))) {
      j += 4;
    }
    if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
      ++j;
      while (j < s.size() && is_digit(s[j])) ++j;
    }
    return j;
  }
  if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
    ++j;
    while (j < s.size() && is_digit(s[j])) ++j;
    return j;
  }
  return i;
}

double parse_core(const std::string& s, size_t begin, size_t end, bool negative) {
  std::string digits;
  for (size_t i = begin; i < end; ++i) {
    if (s[i] != ',') digits += s[i];
  }
  double v = 0.0;
  std::from_chars(digits.data(), digits.data() + digits.size(), v);
  return negative ? -v : v;
}

size_t skip_spaces(const std::string& s, size_t i) {
  while (i < s.size() && s[i] == ' ') ++i;
  return i;
}

}  // namespace

std::vector<ExtractedNumber> extract_numbers(const std::string& sentence,
                                             const std::string& sentence_id) {
  std::vector<ExtractedNumber> out;
  const std::string& s = sentence;
  size_t i = 0;
  while (i < s.size()) {
    // Accounting negative: "(720)", "( $ 1,234.5 )", "(5%)".
    if (s[i] == '(') {
      size_t j = skip_spaces(s, i + 1);
      if (j < s.size() && s[j] == '$') j = skip_spaces(s, j + 1);
      size_t core_begin = j;
      size_t core_end = match_number_core(s, j);
      if (core_end > core_begin) {
        j = core_end;
        if (j < s.size() && s[j] == '%') ++j;
        j = skip_spaces(s, j);
        if (j < s.size() && s[j] == ')') {
          ++j;
          out.push_back({parse_core(s, core_begin, core_end, /*negative=*/true), sentence_id,
                         i, j, s.substr(i, j - i)});
          i = j;
          continue;
        }
      }
      ++i;
      continue;
    }

    size_t start = i;
    size_t j = i;
    bool negative = false;
    if (s[j] == '-' && (j == 0 || !std::isalnum(static_cast<unsigned char>(s[j - 1])))) {
      size_t k = j + 1;
      if (k < s.size() && (is_digit(s[k]) || (s[k] == '.' && k + 1 < s.size() && is_digit(s[k + 1])))) {
        negative = true;
        j = k;
      }
    }
    if (s[j] == '$') {
      size_t k = skip_spaces(s, j + 1);
      if (match_number_core(s, k) > k) {
        j = k;
      } else if (!negative) {
        ++i;
        continue;
      }
    }
    size_t core_begin = j;
    size_t core_end = match_number_core(s, j);
    if (core_end == core_begin) {
      i = start + 1;
      continue;
    }
    j = core_end;
    if (j < s.size() && s[j] == '%') ++j;
    out.push_back({parse_core(s, core_begin, core_end, negative), sentence_id, start, j,
                   s.substr(start, j - start)});
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// table linearization

namespace {

std::string fill_template(const std::string& tpl, const std::string& row,
                          const std::string& col, const std::string& cell) {
  std::string out;
  size_t i = 0;
  while (i < tpl.size()) {
    if (tpl.compare(i, 5, "{row}") == 0) {
      out += row;
      i += 5;
    } else if (tpl.compare(i, 5, "{col}") == 0) {
      out += col;
      i += 5;
    } else if (tpl.compare(i, 6, "{cell}") == 0) {
      out += cell;
      i += 6;
    } else {
      out += tpl[i++];
    }
  }
  return out;
}

std::optional<double> cell_number(const std::string& cell) {
  auto nums = extract_numbers(cell, "");
  if (nums.empty()) return std::nullopt;
  return nums.front().value;
}

}  // namespace

LinearizedTable linearize_table(const std::vector<std::vector<std::string>>& table,
                                const TableTemplates& templates) {
  if (table.size() < 2 || table[0].empty()) {
    throw TableError(TableError::Kind::Empty, "table needs a header row and a data row");
  }
  const auto& header = table[0];
  LinearizedTable out;
  for (size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != header.size()) {
      throw TableError(TableError::Kind::Ragged,
                       "row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                           " cells, header has " + std::to_string(header.size()));
    }
    std::string row_header = trim(row[0]);
    std::string display = row_header.empty() ? "row " + std::to_string(r) : row_header;
    std::vector<double> cells;
    for (size_t c = 1; c < row.size(); ++c) {
      std::string cell = trim(row[c]);
      TableSentence ts;
      ts.id = "table_" + std::to_string(r - 1) + "_" + std::to_string(c - 1);
      ts.text = fill_template(templates.cell_sentence, display, trim(header[c]), cell);
      ts.row_header = display;
      ts.row = r - 1;
      ts.col = c - 1;
      out.sentences.push_back(std::move(ts));
      if (auto num = cell_number(cell)) cells.push_back(*num);
    }
    if (!row_header.empty()) out.context.add_row(row_header, std::move(cells));
  }
  return out;
}

std::vector<RankedSentence> record_sentences(const QARecord& record,
                                             const TableTemplates& templates) {
  std::vector<RankedSentence> out;
  size_t text_idx = 0;
  for (const auto* block : {&record.pre_text, &record.post_text}) {
    for (const std::string& s : *block) {
      out.push_back({"text_" + std::to_string(text_idx++), 0.0, s});
    }
  }
  if (record.table.size() >= 2) {
    for (auto& ts : linearize_table(record.table, templates).sentences) {
      out.push_back({ts.id, 0.0, ts.text});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// generator input

GeneratorInput make_generator_input(const QARecord& record,
                                    const std::vector<RankedSentence>& internal,
                                    const std::vector<RankedSentence>& external,
                                    size_t budget) {
  std::vector<std::string> wanted;
  wanted.push_back(record.question);
  for (const auto& s : internal) wanted.push_back(s.text);
  for (const auto& s : external) wanted.push_back(s.text);

  GeneratorInput out;
  size_t used = 0;
  for (size_t i = 0; i < wanted.size(); ++i) {
    size_t t = count_tokens(wanted[i]);
    if (used + t <= budget) {
      out.sentences.push_back(wanted[i]);
      used += t;
      continue;
    }
    size_t remaining = budget - used;
    if (remaining > 0) {
      auto tokens = whitespace_tokens(wanted[i]);
      std::string cut;
      for (size_t k = 0; k < remaining; ++k) {
        if (k > 0) cut += ' ';
        cut += tokens[k];
      }
      out.sentences.push_back(cut);
      used = budget;
    }
    out.truncated = true;
    break;
  }
  out.token_count = used;
  return out;
}

// ---------------------------------------------------------------------------
// dataset loading

namespace {

std::string cell_to_string(const json& cell) {
  if (cell.is_string()) return cell.get<std::string>();
  return cell.dump();
}

QARecord parse_record(size_t index, const json& j) {
  if (!j.is_object()) throw SchemaError(index, "$", "record is not an object");
  QARecord rec;
  if (!j.contains("id") || !j["id"].is_string()) {
    throw SchemaError(index, "id", "missing required field");
  }
  rec.id = j["id"].get<std::string>();
  if (!j.contains("qa") || !j["qa"].is_object()) {
    throw SchemaError(index, "qa", "missing required field");
  }
  const json& qa = j["qa"];
  if (!qa.contains("question") || !qa["question"].is_string()) {
    throw SchemaError(index, "qa.question", "missing required field");
  }
  rec.question = qa["question"].get<std::string>();
  if (!qa.contains("program") || !qa["program"].is_string()) {
    throw SchemaError(index, "qa.program", "missing required field");
  }
  rec.gold_program = qa["program"].get<std::string>();
  if (!qa.contains("exe_ans")) throw SchemaError(index, "qa.exe_ans", "missing required field");
  rec.gold_answer = qa["exe_ans"].is_string() ? qa["exe_ans"].get<std::string>()
                                              : qa["exe_ans"].dump();

  for (const char* field : {"pre_text", "post_text"}) {
    if (!j.contains(field)) continue;
    if (!j[field].is_array()) throw SchemaError(index, field, "expected an array of sentences");
    auto& dst = std::string(field) == "pre_text" ? rec.pre_text : rec.post_text;
    for (const auto& s : j[field]) dst.push_back(cell_to_string(s));
  }
  if (j.contains("table")) {
    if (!j["table"].is_array()) throw SchemaError(index, "table", "expected an array of rows");
    for (const auto& row : j["table"]) {
      if (!row.is_array()) throw SchemaError(index, "table", "expected rows to be arrays");
      std::vector<std::string> cells;
      for (const auto& cell : row) cells.push_back(cell_to_string(cell));
      rec.table.push_back(std::move(cells));
    }
  }
  if (qa.contains("gold_inds")) {
    const json& gi = qa["gold_inds"];
    if (gi.is_array()) {
      for (const auto& g : gi) rec.gold_facts.push_back(cell_to_string(g));
    } else if (gi.is_object()) {
      for (auto it = gi.begin(); it != gi.end(); ++it) rec.gold_facts.push_back(it.key());
    } else {
      throw SchemaError(index, "qa.gold_inds", "expected an array or object");
    }
    std::sort(rec.gold_facts.begin(), rec.gold_facts.end());
    rec.gold_facts.erase(std::unique(rec.gold_facts.begin(), rec.gold_facts.end()),
                         rec.gold_facts.end());
  }
  if (j.contains("metadata") && j["metadata"].is_object()) {
    for (auto it = j["metadata"].begin(); it != j["metadata"].end(); ++it) {
      rec.metadata[it.key()] =
          it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
    }
  }
  return rec;
}

void validate_record(size_t index, const QARecord& rec) {
  try {
    dsl::parse_program(rec.gold_program);
  } catch (const dsl::DslError& e) {
    throw SchemaError(index, "qa.program", std::string("gold program does not parse: ") +
                                               e.what());
  }
  size_t text_count = rec.pre_text.size() + rec.post_text.size();
  size_t data_rows = rec.table.size() >= 2 ? rec.table.size() - 1 : 0;
  size_t data_cols = rec.table.size() >= 2 && !rec.table[0].empty() ? rec.table[0].size() - 1 : 0;
  for (const std::string& id : rec.gold_facts) {
    bool ok = false;
    if (id.rfind("text_", 0) == 0) {
      size_t n = 0;
      auto [p, ec] = std::from_chars(id.data() + 5, id.data() + id.size(), n);
      ok = ec == std::errc() && p == id.data() + id.size() && n < text_count;
    } else if (id.rfind("table_", 0) == 0) {
      size_t r = 0, c = 0;
      const char* p = id.data() + 6;
      const char* end = id.data() + id.size();
      auto res = std::from_chars(p, end, r);
      if (res.ec == std::errc() && res.ptr < end && *res.ptr == '_') {
        auto res2 = std::from_chars(res.ptr + 1, end, c);
        ok = res2.ec == std::errc() && res2.ptr == end && r < data_rows && c < data_cols;
      }
    }
    if (!ok) {
      throw SchemaError(index, "qa.gold_inds",
                        "gold fact '" + id + "' does not name an existing sentence or cell");
    }
  }
}

}  // namespace

LoadResult load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(0, "$", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError(0, "$", "expected a JSON array of records");

  LoadResult out;
  for (size_t i = 0; i < doc.size(); ++i) {
    try {
      QARecord rec = parse_record(i, doc[i]);
      validate_record(i, rec);
      out.records.push_back(std::move(rec));
    } catch (const Error& e) {
      out.failures.push_back({i, e.what()});
    }
  }
  return out;
}

}  // namespace finrag::preprocess

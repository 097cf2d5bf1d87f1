#include "finrag/preprocess.hpp"

#include <cstdio>
#include <fstream>

#include "doctest.h"

#include "finrag/common.hpp"

using namespace finrag;
using namespace finrag::preprocess;

namespace {

const std::string kFixtureDir = FINRAG_FIXTURE_DIR;

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/finrag_test_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_dataset: bundled fixtures load cleanly") {
  auto result = load_dataset(kFixtureDir + "/dataset.json");
  CHECK(result.failures.empty());
  CHECK(result.records.size() == 14);
  const QARecord* fig = nullptr;
  for (const auto& r : result.records) {
    if (r.id == "fx-options-change") fig = &r;
  }
  REQUIRE(fig != nullptr);
  CHECK(fig->gold_program == "divide(9413, 20.01), divide(8249, 9.48), subtract(#0, #1)");
  CHECK(fig->table.size() == 4);
  CHECK(fig->gold_facts.size() == 4);
}

TEST_CASE("load_dataset: per-record schema failures do not abort the batch") {
  auto path = write_temp("schema.json", R"json([
    {"id": "ok", "pre_text": ["x is 1 ."],
     "qa": {"question": "q", "program": "add(1, 2)", "exe_ans": "3"}},
    {"id": "broken", "qa": {"program": "add(1, 2)", "exe_ans": "3"}}
  ])json");
  auto result = load_dataset(path);
  CHECK(result.records.size() == 1);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].record_index == 1);
  CHECK(result.failures[0].message.find("qa.question") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("load_dataset: bad gold programs and dangling gold facts are reported") {
  auto path = write_temp("gold.json", R"json([
    {"id": "bad-prog", "qa": {"question": "q", "program": "frob(1, 2)", "exe_ans": "3"}},
    {"id": "bad-ind", "pre_text": ["one sentence"],
     "qa": {"question": "q", "program": "add(1, 2)", "exe_ans": "3",
            "gold_inds": ["text_9"]}}
  ])json");
  auto result = load_dataset(path);
  CHECK(result.records.empty());
  REQUIRE(result.failures.size() == 2);
  CHECK(result.failures[0].message.find("does not parse") != std::string::npos);
  CHECK(result.failures[1].message.find("text_9") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("load_dataset: io and document-level schema errors") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/nope.json"), IoError);
  auto not_json = write_temp("notjson.json", "this is not json");
  CHECK_THROWS_AS(load_dataset(not_json), SchemaError);
  std::remove(not_json.c_str());
  auto not_array = write_temp("notarray.json", "{\"a\": 1}");
  CHECK_THROWS_AS(load_dataset(not_array), SchemaError);
  std::remove(not_array.c_str());
}

TEST_CASE("load_dataset: gold_inds accepts the object form") {
  auto path = write_temp("inds.json", R"json([
    {"id": "obj", "pre_text": ["a is 1 .", "b is 2 ."],
     "qa": {"question": "q", "program": "add(1, 2)", "exe_ans": "3",
            "gold_inds": {"text_1": "b is 2 .", "text_0": "a is 1 ."}}}
  ])json");
  auto result = load_dataset(path);
  REQUIRE(result.records.size() == 1);
  CHECK(result.records[0].gold_facts == std::vector<std::string>{"text_0", "text_1"});
  std::remove(path.c_str());
}

TEST_CASE("linearize_table: template sentence matches the documented example") {
  std::vector<std::vector<std::string>> table = {
      {"", "2006"},
      {"Risk-free interest rate", "5%"},
  };
  auto lin = linearize_table(table);
  REQUIRE(lin.sentences.size() == 1);
  CHECK(lin.sentences[0].text == "Risk-free interest rate of 2006 is 5%.");
  CHECK(lin.sentences[0].id == "table_0_0");
  CHECK(lin.context.row("Risk-free interest rate") == std::vector<double>{5});
}

TEST_CASE("linearize_table: sentence count is rows x columns") {
  std::vector<std::vector<std::string>> table = {
      {"", "a", "b", "c"},
      {"r1", "1", "2", "3"},
      {"r2", "4", "5", "6"},
  };
  auto lin = linearize_table(table);
  CHECK(lin.sentences.size() == 6);
  CHECK(lin.sentences[4].id == "table_1_1");
}

TEST_CASE("linearize_table: shape errors") {
  CHECK_THROWS_AS(linearize_table({}), TableError);
  CHECK_THROWS_AS(linearize_table({{"only", "header"}}), TableError);
  try {
    linearize_table({{"", "a"}, {"r", "1", "2"}});
    FAIL("expected RaggedTable");
  } catch (const TableError& e) {
    CHECK(e.table_kind() == TableError::Kind::Ragged);
  }
}

TEST_CASE("linearize_table: empty row headers keep the sentence, skip the context") {
  std::vector<std::vector<std::string>> table = {
      {"", "2020"},
      {"", "42"},
      {"named", "7"},
  };
  auto lin = linearize_table(table);
  CHECK(lin.sentences[0].text == "row 1 of 2020 is 42.");
  CHECK(lin.context.size() == 1);
  CHECK(lin.context.has_row("named"));
}

TEST_CASE("linearize_table: non-numeric cells are skipped in the context") {
  std::vector<std::vector<std::string>> table = {
      {"", "a", "b", "c"},
      {"mixed", "n/a", "(720)", "$7,680"},
  };
  auto lin = linearize_table(table);
  CHECK(lin.context.row("mixed") == std::vector<double>{-720, 7680});
}

TEST_CASE("extract_numbers: documented forms") {
  auto one = extract_numbers("total debt: $7680", "s");
  REQUIRE(one.size() == 1);
  CHECK(one[0].value == 7680.0);
  CHECK(one[0].raw == "$7680");

  auto two = extract_numbers("Risk-free interest rate of 2006 is 5%.", "s");
  REQUIRE(two.size() == 2);
  CHECK(two[0].value == 2006.0);
  CHECK(two[1].value == 5.0);  // percent sign stripped, value unscaled
  CHECK(two[1].raw == "5%");

  CHECK(extract_numbers("no numerals here", "s").empty());
}

TEST_CASE("extract_numbers: negatives, commas, ranges") {
  auto paren = extract_numbers("a charge of (720) was recorded", "s");
  REQUIRE(paren.size() == 1);
  CHECK(paren[0].value == -720.0);
  CHECK(paren[0].raw == "(720)");

  auto comma = extract_numbers("revenue was $7,680 in total", "s");
  REQUIRE(comma.size() == 1);
  CHECK(comma[0].value == 7680.0);

  auto range = extract_numbers("from 2015-2019 inclusive", "s");
  REQUIRE(range.size() == 2);
  CHECK(range[0].value == 2015.0);
  CHECK(range[1].value == 2019.0);

  auto neg = extract_numbers("a swing of -5.5% year over year", "s");
  REQUIRE(neg.size() == 1);
  CHECK(neg[0].value == -5.5);

  auto spaced = extract_numbers("priced at $ 4.55 per share", "s");
  REQUIRE(spaced.size() == 1);
  CHECK(spaced[0].value == 4.55);

  auto frac = extract_numbers("a ratio of .5 was observed", "s");
  REQUIRE(frac.size() == 1);
  CHECK(frac[0].value == 0.5);
}

TEST_CASE("extract_numbers: spans point at the original slice") {
  std::string s = "x (1,234.5) y";
  auto nums = extract_numbers(s, "sent-9");
  REQUIRE(nums.size() == 1);
  CHECK(nums[0].sentence_id == "sent-9");
  CHECK(s.substr(nums[0].span_begin, nums[0].span_end - nums[0].span_begin) == nums[0].raw);
  CHECK(nums[0].value == -1234.5);
}

TEST_CASE("extraction round-trip: re-parsing the raw slice gives the same value") {
  Rng rng(505);
  for (int trial = 0; trial < 1000; ++trial) {
    double value = rng.uniform_int(0, 1) ? rng.uniform_int(0, 2000000)
                                         : rng.uniform(0.0, 10000.0);
    std::string text = format_number(value);
    bool parenthesized = rng.uniform_int(0, 3) == 0;
    if (rng.uniform_int(0, 1)) {
      // insert thousands separators into the integer part
      auto dot = text.find('.');
      std::string head = dot == std::string::npos ? text : text.substr(0, dot);
      std::string tail = dot == std::string::npos ? "" : text.substr(dot);
      std::string grouped;
      int count = 0;
      for (auto it = head.rbegin(); it != head.rend(); ++it) {
        if (count > 0 && count % 3 == 0) grouped += ',';
        grouped += *it;
        ++count;
      }
      text = std::string(grouped.rbegin(), grouped.rend()) + tail;
    }
    if (rng.uniform_int(0, 1)) text = "$" + text;
    if (rng.uniform_int(0, 2) == 0) text += "%";
    if (parenthesized) text = "(" + text + ")";
    auto first = extract_numbers("pad " + text + " pad", "s");
    REQUIRE(first.size() == 1);
    auto again = extract_numbers(first[0].raw, "s");
    REQUIRE(again.size() == 1);
    CHECK(again[0].value == first[0].value);
    CHECK(first[0].value == (parenthesized ? -value : value));
  }
}

TEST_CASE("make_generator_input: everything fits") {
  QARecord rec;
  rec.question = "q one two";
  std::vector<RankedSentence> internal = {{"i0", 1.0, "alpha beta"}};
  std::vector<RankedSentence> external = {{"e0", 0.9, "gamma delta"}};
  auto input = make_generator_input(rec, internal, external, 100);
  CHECK_FALSE(input.truncated);
  REQUIRE(input.sentences.size() == 3);
  CHECK(input.sentences[0] == "q one two");
  CHECK(input.sentences[1] == "alpha beta");
  CHECK(input.sentences[2] == "gamma delta");
  CHECK(input.token_count == 7);
}

TEST_CASE("make_generator_input: external facts drop from the tail first") {
  QARecord rec;
  rec.question = "one two three";
  std::vector<RankedSentence> internal = {{"i0", 1.0, "four five six"}};
  std::vector<RankedSentence> external = {{"e0", 0.9, "seven eight nine ten"}};
  auto input = make_generator_input(rec, internal, external, 8);
  CHECK(input.truncated);
  REQUIRE(input.sentences.size() == 3);
  CHECK(input.sentences[2] == "seven eight");  // cut to the remaining budget
  CHECK(input.token_count == 8);

  auto tighter = make_generator_input(rec, internal, external, 6);
  CHECK(tighter.sentences.size() == 2);
  CHECK(tighter.token_count == 6);
}

TEST_CASE("make_generator_input: degenerate budget truncates the question") {
  QARecord rec;
  rec.question = "a b c d e f";
  auto input = make_generator_input(rec, {}, {}, 2);
  CHECK(input.truncated);
  REQUIRE(input.sentences.size() == 1);
  CHECK(input.sentences[0] == "a b");
}

TEST_CASE("make_generator_input: budget compliance and ordering properties") {
  Rng rng(606);
  for (int trial = 0; trial < 300; ++trial) {
    QARecord rec;
    int qt = rng.uniform_int(1, 30);
    for (int i = 0; i < qt; ++i) rec.question += "q ";
    std::vector<RankedSentence> internal, external;
    for (int i = 0; i < rng.uniform_int(0, 5); ++i) {
      std::string text;
      for (int j = rng.uniform_int(1, 40); j > 0; --j) text += "i ";
      internal.push_back({"i" + std::to_string(i), 1.0, text});
    }
    for (int i = 0; i < rng.uniform_int(0, 5); ++i) {
      std::string text;
      for (int j = rng.uniform_int(1, 40); j > 0; --j) text += "e ";
      external.push_back({"e" + std::to_string(i), 1.0, text});
    }
    size_t budget = static_cast<size_t>(rng.uniform_int(1, 2048));
    auto input = make_generator_input(rec, internal, external, budget);
    size_t total = 0;
    bool seen_external = false;
    for (const auto& s : input.sentences) {
      total += count_tokens(s);
      if (!s.empty() && s[0] == 'e') seen_external = true;
      if (seen_external) CHECK(s[0] == 'e');  // internal facts precede external
    }
    CHECK(total <= budget);
    CHECK(total == input.token_count);
  }
}

TEST_CASE("record_sentences: ids cover texts then table cells") {
  auto result = load_dataset(kFixtureDir + "/dataset.json");
  const QARecord* rec = nullptr;
  for (const auto& r : result.records) {
    if (r.id == "fx-options-change") rec = &r;
  }
  REQUIRE(rec != nullptr);
  auto sentences = record_sentences(*rec);
  REQUIRE(sentences.size() == 5 + 6);  // 5 texts, 3x2 table cells
  CHECK(sentences[0].id == "text_0");
  CHECK(sentences[4].id == "text_4");
  CHECK(sentences[5].id == "table_0_0");
  CHECK(sentences.back().id == "table_2_1");
}

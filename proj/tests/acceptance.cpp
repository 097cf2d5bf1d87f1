// Acceptance suite: one line per criterion, each with its stated tolerance
// and runtime budget. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "support/test_helpers.hpp"

#include "finrag/decoder.hpp"
#include "finrag/dsl.hpp"
#include "finrag/eval.hpp"
#include "finrag/executor.hpp"
#include "finrag/llmgen.hpp"
#include "finrag/pipeline.hpp"
#include "finrag/preprocess.hpp"
#include "finrag/retrieval.hpp"
#include "finrag/synthetic.hpp"

using namespace finrag;

namespace {

const std::string kFixtureDir = FINRAG_FIXTURE_DIR;

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void()> run;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

std::vector<preprocess::QARecord> fixture_records() {
  auto loaded = preprocess::load_dataset(kFixtureDir + "/dataset.json");
  require(loaded.failures.empty(), "fixture dataset must load cleanly");
  return loaded.records;
}

dsl::ProgramVocabulary record_vocabulary(const preprocess::QARecord& rec) {
  std::vector<dsl::ContextNumber> numbers;
  for (const auto& s : preprocess::record_sentences(rec)) {
    for (const auto& n : preprocess::extract_numbers(s.text, s.id)) {
      numbers.push_back({n.value, n.sentence_id, n.span_begin, n.span_end, n.raw});
    }
  }
  std::vector<std::string> rows;
  if (rec.table.size() >= 2) {
    rows = preprocess::linearize_table(rec.table).context.row_names();
  }
  return dsl::ProgramVocabulary::build(numbers, rows);
}

// --- criteria -------------------------------------------------------------

void executor_paper_examples() {
  auto fig = executor::execute_program(
      dsl::parse_program("divide(9413, 20.01), divide(8249, 9.48), subtract(#0, #1)"), {});
  require(std::fabs(fig.number() - (-399.73)) <= 0.5, "three-step example outside -399.73+-0.5");

  auto chain =
      executor::execute_program(dsl::parse_program("divide(18, 100), divide(1.3, #0)"), {});
  require(std::fabs(chain.number() - 7.2222) <= 0.01, "divide chain outside 7.2222+-0.01");

  auto avg = executor::execute_program(
      dsl::parse_program("multiply(45, 4), add(#0, 44), divide(#1, 5)"), {});
  require(avg.number() == 44.8, "average example must equal 44.8 exactly");
}

void epsilon_comparison_fixture() {
  require(llmgen::answers_match(llmgen::parse_answer("94.17%"), "0.942",
                                llmgen::kDefaultEpsilon),
          "94.17% vs 0.942 must be judged correct");
  require(!llmgen::answers_match(llmgen::parse_answer("84.37%"), "0.6142",
                                 llmgen::kDefaultEpsilon),
          "84.37% vs 0.6142 must be judged incorrect");
}

void executor_oracle_equivalence() {
  Rng rng(90210);
  int clean = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto ctx = testsupport::random_context(rng);
    auto program = testsupport::random_program(ctx.vocab, rng);
    auto ours = testsupport::run_executor(program, ctx.table);
    auto reference = testsupport::oracle_execute(program, ctx.table);
    require(testsupport::outcomes_equal(ours, reference),
            "executor disagrees with the oracle on: " + dsl::serialize_program(program));
    if (!ours.error_kind) ++clean;
  }
  require(clean >= 300, "too few error-free random programs to be meaningful");
}

void mask_soundness_and_completeness() {
  Rng rng(1337);
  for (int trial = 0; trial < 1000; ++trial) {
    auto ctx = testsupport::random_context(rng);
    auto tokens = testsupport::random_walk_tokens(ctx.vocab, rng);
    auto program = dsl::tokens_to_program(ctx.vocab, tokens);
    dsl::parse_program(dsl::serialize_program(program));  // throws on violation
  }
  for (const auto& rec : fixture_records()) {
    auto vocab = record_vocabulary(rec);
    auto gold = dsl::encode_program(vocab, dsl::parse_program(rec.gold_program));
    std::vector<size_t> prefix{vocab.go_index()};
    for (size_t tok : gold) {
      auto valid = dsl::valid_next_tokens(vocab, prefix);
      require(std::find(valid.begin(), valid.end(), tok) != valid.end(),
              "gold program for " + rec.id + " leaves the valid set");
      prefix.push_back(tok);
    }
  }
}

void retrieval_exactness() {
  Rng rng(8080);
  retrieval::EmbeddingMatrix m;
  m.n = 200;
  m.d = 32;
  m.data.resize(m.n * m.d);
  for (auto& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (size_t i = 0; i < m.n; ++i) m.ids.push_back("v" + std::to_string(i));
  auto index = retrieval::FlatIndex::build(retrieval::l2_normalize(m));

  // self-similarity after normalization
  std::vector<float> self(index.matrix().row(42), index.matrix().row(42) + 32);
  auto self_hit = index.search(self, 1);
  require(self_hit.items[0].id == "v42", "self-query must return the stored vector first");
  require(std::fabs(self_hit.items[0].score - 1.0) <= 1e-6, "self-similarity must be 1 +- 1e-6");

  for (int trial = 0; trial < 1000; ++trial) {
    retrieval::EmbeddingMatrix qm;
    qm.n = 1;
    qm.d = 32;
    qm.ids = {"q"};
    qm.data.resize(32);
    for (auto& x : qm.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    qm = retrieval::l2_normalize(qm);
    std::vector<float> q(qm.row(0), qm.row(0) + 32);
    size_t k = 1 + static_cast<size_t>(rng.uniform_int(0, 9));
    auto hits = index.search(q, k);

    // independent linear scan
    std::vector<std::pair<double, size_t>> scored;
    for (size_t i = 0; i < index.size(); ++i) {
      double s = 0.0;
      for (size_t j = 0; j < 32; ++j) {
        s += static_cast<double>(index.matrix().row(i)[j]) * q[j];
      }
      scored.emplace_back(s, i);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (size_t i = 0; i < k; ++i) {
      require(hits.items[i].id == index.matrix().ids[scored[i].second],
              "flat index id differs from the linear-scan oracle");
      require(std::fabs(hits.items[i].score - scored[i].first) <= 1e-9,
              "flat index score differs from the linear-scan oracle");
    }
  }
}

void recall_contract() {
  // ten questions with hand-placed gold facts among five ranked sentences;
  // per-question recall@3 and recall@5 written out by hand
  struct Fixture {
    std::vector<std::string> ranking;
    std::set<std::string> gold;
    double recall3;
    double recall5;
  };
  std::vector<Fixture> fixtures = {
      {{"a", "b", "c", "d", "e"}, {"a", "b"}, 1.0, 1.0},
      {{"a", "b", "c", "d", "e"}, {"a", "e"}, 0.5, 1.0},
      {{"a", "b", "c", "d", "e"}, {"d", "e"}, 0.0, 1.0},
      {{"a", "b", "c", "d", "e"}, {"c"}, 1.0, 1.0},
      {{"a", "b", "c", "d", "e"}, {"e"}, 0.0, 1.0},
      {{"a", "b", "c", "d", "e"}, {"a", "b", "c", "d"}, 0.75, 1.0},
      {{"a", "b", "c", "d", "e"}, {"b", "d", "x"}, 1.0 / 3, 2.0 / 3},
      {{"a", "b", "c", "d", "e"}, {"x", "y"}, 0.0, 0.0},
      {{"a", "b", "c", "d", "e"}, {"a", "c", "e"}, 2.0 / 3, 1.0},
      {{"a", "b", "c", "d", "e"}, {"b"}, 1.0, 1.0},
  };
  double macro3 = 0.0, macro5 = 0.0;
  for (const auto& f : fixtures) {
    retrieval::RankedFacts facts;
    double score = 1.0;
    for (const auto& id : f.ranking) facts.items.push_back({id, score -= 0.01, ""});
    double r3 = retrieval::recall_at_k(facts, f.gold, 3);
    double r5 = retrieval::recall_at_k(facts, f.gold, 5);
    require(r3 == f.recall3, "recall@3 differs from the hand-computed value");
    require(r5 == f.recall5, "recall@5 differs from the hand-computed value");
    macro3 += r3;
    macro5 += r5;
  }
  // hand aggregates: sum@3 = 5.25, sum@5 = 8 + 2/3
  require(std::fabs(macro3 / 10 - 0.525) < 1e-12,
          "macro recall@3 differs from the hand-computed aggregate");
  require(std::fabs(macro5 / 10 - (8.0 + 2.0 / 3.0) / 10) < 1e-12,
          "macro recall@5 differs from the hand-computed aggregate");

  Rng rng(2468);
  for (int trial = 0; trial < 1000; ++trial) {
    retrieval::RankedFacts facts;
    int n = rng.uniform_int(1, 10);
    for (int i = 0; i < n; ++i) facts.items.push_back({"s" + std::to_string(i), 1.0 - i, ""});
    std::set<std::string> gold;
    for (int i = rng.uniform_int(1, 4); i > 0; --i) {
      gold.insert("s" + std::to_string(rng.uniform_int(0, 12)));
    }
    require(retrieval::recall_at_k(facts, gold, 5) >= retrieval::recall_at_k(facts, gold, 3),
            "recall@5 must dominate recall@3");
  }
}

void decoder_gradient_fidelity() {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    size_t dim = 4 + (seed % 5);  // 4..8
    std::vector<dsl::ContextNumber> numbers = {
        {2.5, "text_0", 0, 3, "2.5"},
        {4, "text_0", 4, 5, "4"},
        {17, "text_0", 6, 8, "17"},
    };
    decoder::CandidateSet cands;
    cands.vocab = dsl::ProgramVocabulary::build(numbers, {"net revenue"});
    Rng rng(seed);
    cands.input_emb = decoder::Matrix(cands.vocab.input_indices().size(), dim);
    for (auto& x : cands.input_emb.a) x = rng.normal(0.0, 0.5);
    auto gold = dsl::encode_program(
        cands.vocab,
        dsl::parse_program("add(2.5, CONST_1), table_sum(net revenue, none), divide(#0, 17)"));
    auto task = decoder::make_task(cands, gold);
    auto params = decoder::DecoderParams::init(dim, seed * 13 + 1);
    double err = decoder::gradient_check(params, task, 1e-5);
    require(err < 1e-4, "gradient error " + format_number(err) + " at seed " +
                            std::to_string(seed));
  }
}

void decoder_learnability() {
  auto examples = synthetic::make_synthetic_task(50, 64, 7);
  auto cfg = synthetic::synthetic_train_config(7);
  auto run1 = decoder::train(decoder::DecoderParams::init(64, 7), examples, cfg);
  require(run1.curve.size() <= 200, "training must finish within 200 epochs");
  require(decoder::sequence_accuracy(run1.params, examples) == 1.0,
          "teacher-free sequence accuracy must reach 100%");
  require(run1.curve.back().mean_loss < run1.curve.front().mean_loss,
          "final epoch loss must undercut the first epoch loss");

  auto run2 = decoder::train(decoder::DecoderParams::init(64, 7), examples, cfg);
  require(run1.curve.size() == run2.curve.size(), "seeded rerun must match epoch count");
  for (size_t i = 0; i < run1.curve.size(); ++i) {
    require(run1.curve[i].mean_loss == run2.curve[i].mean_loss,
            "seeded rerun loss curves must be bit-identical");
  }
  auto va = decoder::param_blocks(run1.params);
  auto vb = decoder::param_blocks(run2.params);
  for (size_t i = 0; i < va.size(); ++i) {
    require(*va[i].data == *vb[i].data, "seeded rerun parameters must be bit-identical");
  }
}

void pipeline_self_consistency() {
  auto records = fixture_records();
  pipeline::PipelineConfig cfg;
  cfg.backend = pipeline::Backend::Gold;
  cfg.definitions_path = kFixtureDir + "/definitions.json";
  auto result = pipeline::run_pipeline(records, cfg);
  require(result.report.execution_accuracy.has_value(), "report must carry execution accuracy");
  require(*result.report.execution_accuracy >= 0.99,
          "gold replay execution accuracy fell below 0.99");
  for (const auto& t : result.trace) {
    require(t.verdict == "correct" || !t.failure.empty(),
            "every miss must be itemized as a failure");
  }
  auto outcomes = eval::judge_records(
      records,
      [&] {
        std::vector<eval::Prediction> preds;
        for (const auto& rec : records) {
          preds.push_back(eval::Prediction::from_program(dsl::parse_program(rec.gold_program)));
        }
        return preds;
      }(),
      cfg.epsilon);
  for (const auto& oc : outcomes) {
    if (oc.program_correct.value_or(false)) {
      require(oc.execution_correct, "program-accurate set must be inside execution-accurate");
    }
  }
}

void prompt_fidelity() {
  auto prompt = llmgen::build_prompt({"some retrieved context ."}, "what is the ratio?",
                                     llmgen::PromptConfig::few_shot());
  const auto& examples = llmgen::default_few_shot_examples();
  for (const auto& ex : examples) {
    std::string rendered =
        ex.context_and_question + " " + llmgen::kInstruction + " " + ex.answer;
    require(prompt.find(rendered) != std::string::npos,
            "few-shot prompt must embed the bundled example verbatim");
  }
  require(prompt.find("0.4949") != std::string::npos, "first example answer must appear");
  require(prompt.size() >= llmgen::kInstruction.size() &&
              prompt.compare(prompt.size() - llmgen::kInstruction.size(),
                             llmgen::kInstruction.size(), llmgen::kInstruction) == 0,
          "prompt must end with the instruction byte-exactly");
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {"executor worked examples (-399.73, 7.2222, 44.8)", 1.0, executor_paper_examples},
      {"epsilon comparison fixture (94.17% accepted, 84.37% rejected)", 1.0,
       epsilon_comparison_fixture},
      {"executor-oracle equivalence on 1000 random programs", 10.0,
       executor_oracle_equivalence},
      {"mask soundness (1000 walks) and gold-replay completeness", 10.0,
       mask_soundness_and_completeness},
      {"flat-index exactness vs linear scan (200 x 1000, d=32)", 30.0, retrieval_exactness},
      {"recall contract (hand-computed fixture, monotone in k)", 10.0, recall_contract},
      {"decoder gradient fidelity (10 seeds, d=4..8, rel err < 1e-4)", 60.0,
       decoder_gradient_fidelity},
      {"decoder learnability (50 examples, 100% within 200 epochs, deterministic)", 300.0,
       decoder_learnability},
      {"pipeline gold-replay self-consistency (accuracy >= 0.99)", 30.0,
       pipeline_self_consistency},
      {"prompt fidelity (bundled examples verbatim, instruction last)", 1.0, prompt_fidelity},
  };

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    auto start = std::chrono::steady_clock::now();
    std::string verdict = "PASS";
    std::string detail;
    try {
      criteria[i].run();
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = e.what();
      ++failures;
    }
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (verdict == "PASS" && elapsed > criteria[i].budget_seconds) {
      verdict = "FAIL";
      detail = "exceeded runtime budget of " + format_number(criteria[i].budget_seconds) + " s";
      ++failures;
    }
    std::printf("%s  criterion %zu: %s (%.2fs)%s%s\n", verdict.c_str(), i + 1,
                criteria[i].name.c_str(), elapsed, detail.empty() ? "" : " -- ",
                detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}

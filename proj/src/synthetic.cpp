#include "finrag/synthetic.hpp"

#include <array>

#include "finrag/executor.hpp"
#include "finrag/pipeline.hpp"
#include "finrag/retrieval.hpp"

namespace finrag::synthetic {

namespace {

struct Sentinel {
  double value;
  const char* program;
};

constexpr std::array<Sentinel, 5> kSentinels = {{
    {7, "add(7, CONST_1)"},
    {13, "subtract(13, CONST_10)"},
    {21, "multiply(21, CONST_2)"},
    {34, "divide(34, CONST_100)"},
    {55, "add(55, CONST_1000), subtract(#0, 55)"},
}};

constexpr std::array<double, 4> kDecoys = {3, 400, 850, 902};
constexpr std::array<const char*, 3> kSlots = {"alpha", "beta", "gamma"};

}  // namespace

std::vector<preprocess::QARecord> make_synthetic_records(size_t count, uint64_t seed) {
  Rng rng(seed);
  std::vector<preprocess::QARecord> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const Sentinel& s = kSentinels[i % kSentinels.size()];
    size_t d1 = rng.uniform_int(0, static_cast<int>(kDecoys.size()) - 1);
    size_t d2 = (d1 + 1 + rng.uniform_int(0, static_cast<int>(kDecoys.size()) - 2)) %
                kDecoys.size();
    std::vector<double> values = {s.value, kDecoys[d1], kDecoys[d2]};
    size_t pos = rng.uniform_int(0, 2);
    std::swap(values[0], values[pos]);

    preprocess::QARecord rec;
    rec.id = "syn-" + std::to_string(i);
    rec.question = "what does the marker metric imply for this filing?";
    for (size_t k = 0; k < values.size(); ++k) {
      rec.pre_text.push_back(std::string("metric ") + kSlots[k] + " is " +
                             format_number(values[k]) + " .");
    }
    rec.gold_program = s.program;
    auto result =
        executor::execute_program(dsl::parse_program(s.program), executor::TableContext{});
    rec.gold_answer = result.answer_text();
    rec.gold_facts = {"text_" + std::to_string(pos)};
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<decoder::TrainingExample> make_synthetic_task(size_t count, size_t dim,
                                                          uint64_t seed) {
  auto records = make_synthetic_records(count, seed);
  retrieval::HashedEmbedder embedder(dim, 1);
  std::vector<decoder::TrainingExample> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    auto sentences = preprocess::record_sentences(rec);
    auto ranked = retrieval::rank_sentences(
        pipeline::score_sentences(embedder, rec.question, sentences), 3);
    std::vector<preprocess::RankedSentence> facts;
    for (const auto& item : ranked.items) facts.push_back({item.id, item.score, item.payload});
    decoder::TrainingExample ex;
    ex.id = rec.id;
    ex.cands = pipeline::build_candidates(rec, facts, embedder);
    ex.gold = dsl::encode_program(ex.cands.vocab, dsl::parse_program(rec.gold_program));
    out.push_back(std::move(ex));
  }
  return out;
}

decoder::TrainConfig synthetic_train_config(uint64_t seed) {
  decoder::TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 16;
  cfg.dropout = 0.0;
  cfg.epochs = 200;
  cfg.seed = seed;
  cfg.stop_at_full_accuracy = true;
  return cfg;
}

}  // namespace finrag::synthetic

#include "finrag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace finrag::pipeline {

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::Gold: return "gold";
    case Backend::Decoder: return "decoder";
    case Backend::Endpoint: return "endpoint";
  }
  return "?";
}

std::vector<retrieval::ScoredSentence> score_sentences(
    const retrieval::HashedEmbedder& embedder, const std::string& question,
    const std::vector<preprocess::RankedSentence>& sentences) {
  auto q = embedder.embed(question);
  double qn = 0.0;
  for (float x : q) qn += static_cast<double>(x) * x;
  qn = std::sqrt(qn);
  std::vector<retrieval::ScoredSentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    auto v = embedder.embed(s.text);
    double dot = 0.0, vn = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
      dot += static_cast<double>(v[i]) * q[i];
      vn += static_cast<double>(v[i]) * v[i];
    }
    vn = std::sqrt(vn);
    double cosine = (qn > 0.0 && vn > 0.0) ? dot / (qn * vn) : 0.0;
    out.push_back({s.id, cosine, s.text});
  }
  return out;
}

decoder::CandidateSet build_candidates(const preprocess::QARecord& record,
                                       const std::vector<preprocess::RankedSentence>& facts,
                                       const retrieval::HashedEmbedder& embedder) {
  std::vector<dsl::ContextNumber> numbers;
  std::vector<std::string> number_texts;
  for (const auto& fact : facts) {
    for (const auto& n : preprocess::extract_numbers(fact.text, fact.id)) {
      numbers.push_back({n.value, n.sentence_id, n.span_begin, n.span_end, n.raw});
      number_texts.push_back(n.raw + " " + fact.text);
    }
  }
  std::vector<std::string> rows;
  if (record.table.size() >= 2) {
    rows = preprocess::linearize_table(record.table).context.row_names();
  }
  decoder::CandidateSet cands;
  cands.vocab = dsl::ProgramVocabulary::build(numbers, rows);
  size_t dim = embedder.dim();
  cands.input_emb = decoder::Matrix(numbers.size() + rows.size(), dim);
  size_t r = 0;
  for (const auto& text : number_texts) {
    auto e = embedder.embed(text);
    for (size_t j = 0; j < dim; ++j) cands.input_emb.at(r, j) = e[j];
    ++r;
  }
  for (const auto& name : rows) {
    auto e = embedder.embed(name);
    for (size_t j = 0; j < dim; ++j) cands.input_emb.at(r, j) = e[j];
    ++r;
  }
  return cands;
}

namespace {

struct ExternalIndex {
  retrieval::FlatIndex index;
  std::vector<retrieval::DefinitionEntry> definitions;
};

std::optional<ExternalIndex> load_external(const PipelineConfig& config,
                                           const retrieval::HashedEmbedder& embedder) {
  if (config.definitions_path.empty()) return std::nullopt;
  auto defs = retrieval::load_definitions(config.definitions_path);
  retrieval::EmbeddingMatrix m;
  if (!config.embeddings_path.empty()) {
    m = retrieval::read_embeddings(config.embeddings_path);
  } else {
    std::vector<std::string> ids, texts;
    for (const auto& d : defs) {
      ids.push_back(d.term);
      texts.push_back(d.summary);
    }
    m = embedder.embed_all(ids, texts);
  }
  if (!m.normalized) m = retrieval::l2_normalize(m);
  return ExternalIndex{retrieval::FlatIndex::build(std::move(m)), std::move(defs)};
}

}  // namespace

PipelineResult run_pipeline(const std::vector<preprocess::QARecord>& records,
                            const PipelineConfig& config) {
  std::optional<decoder::DecoderParams> params;
  if (config.backend == Backend::Decoder) {
    params = decoder::load_checkpoint(config.checkpoint_path).params;
  }
  // the decoder's input embeddings must match its trained dimension
  size_t embed_dim = params ? params->dim : config.embed_dim;
  retrieval::HashedEmbedder embedder(embed_dim, 1);
  auto external = load_external(config, embedder);

  std::vector<eval::Prediction> predictions;
  std::vector<TraceEntry> trace;
  std::vector<InputAudit> result_inputs;
  std::map<std::string, std::vector<std::string>> retrieved_ids;

  for (const auto& record : records) {
    TraceEntry t;
    t.id = record.id;

    auto sentences = preprocess::record_sentences(record);
    auto internal =
        retrieval::rank_sentences(score_sentences(embedder, record.question, sentences),
                                  config.top_k_internal);
    std::vector<preprocess::RankedSentence> internal_facts;
    for (const auto& item : internal.items) {
      internal_facts.push_back({item.id, item.score, item.payload});
      t.internal_ids.push_back(item.id);
    }

    std::vector<preprocess::RankedSentence> external_facts;
    if (external && external->index.size() > 0) {
      auto q = embedder.embed(record.question);
      double norm = 0.0;
      for (float x : q) norm += static_cast<double>(x) * x;
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (float& x : q) x = static_cast<float>(x / norm);
        size_t k = std::min(config.top_k_external, external->index.size());
        auto hits = external->index.search(q, k);
        for (const auto& item : hits.items) {
          std::string summary;
          for (const auto& d : external->definitions) {
            if (d.term == item.id) {
              summary = d.summary;
              break;
            }
          }
          external_facts.push_back({item.id, item.score, summary});
          t.external_ids.push_back(item.id);
        }
      }
    }
    retrieved_ids[record.id] = t.internal_ids;

    auto input = preprocess::make_generator_input(record, internal_facts, external_facts,
                                                  config.token_budget);
    result_inputs.push_back({record.id, input.sentences, input.truncated, input.token_count});

    eval::Prediction pred;
    switch (config.backend) {
      case Backend::Gold: {
        try {
          pred = eval::Prediction::from_program(dsl::parse_program(record.gold_program));
          t.prompt_or_program = record.gold_program;
        } catch (const Error& e) {
          pred = eval::Prediction::failed(e.kind());
        }
        break;
      }
      case Backend::Decoder: {
        try {
          std::vector<preprocess::RankedSentence> facts = internal_facts;
          facts.insert(facts.end(), external_facts.begin(), external_facts.end());
          auto cands = build_candidates(record, facts, embedder);
          auto program = decoder::generate(*params, cands);
          t.prompt_or_program = dsl::serialize_program(program);
          pred = eval::Prediction::from_program(std::move(program));
        } catch (const Error& e) {
          pred = eval::Prediction::failed(e.kind());
        }
        break;
      }
      case Backend::Endpoint: {
        llmgen::PromptConfig prompt_config = config.prompt_mode == llmgen::PromptMode::FewShot
                                                 ? llmgen::PromptConfig::few_shot()
                                                 : llmgen::PromptConfig::zero_shot();
        std::vector<std::string> context;
        std::string question = record.question;
        if (!input.sentences.empty()) {
          question = input.sentences[0];
          context.assign(input.sentences.begin() + 1, input.sentences.end());
        }
        std::string prompt = llmgen::build_prompt(context, question, prompt_config);
        t.prompt_or_program = prompt;
        try {
          std::string text =
              llmgen::call_generator(config.endpoint, prompt, config.endpoint_timeout);
          pred = eval::Prediction::from_answer(text);
        } catch (const Error& e) {
          pred = eval::Prediction::failed(e.kind());
        }
        break;
      }
    }
    if (pred.answer_text) {
      t.prediction = *pred.answer_text;
    } else if (pred.program) {
      t.prediction = dsl::serialize_program(*pred.program);
    }
    predictions.push_back(std::move(pred));
    trace.push_back(std::move(t));
  }

  std::map<std::string, std::string> echo{
      {"backend", backend_name(config.backend)},
      {"top_k_internal", std::to_string(config.top_k_internal)},
      {"top_k_external", std::to_string(config.top_k_external)},
      {"token_budget", std::to_string(config.token_budget)},
      {"embed_dim", std::to_string(embed_dim)},
      {"seed", std::to_string(config.seed)},
  };
  PipelineResult result;
  result.report = eval::make_report(records, predictions, config.epsilon, config.subset_rules,
                                    echo, &retrieved_ids);

  auto outcomes = eval::judge_records(records, predictions, config.epsilon);
  for (size_t i = 0; i < trace.size(); ++i) {
    const auto& oc = outcomes[i];
    if (oc.failure) {
      trace[i].verdict = "failure";
      trace[i].failure = *oc.failure;
    } else {
      trace[i].verdict = oc.execution_correct ? "correct" : "incorrect";
    }
  }
  result.trace = std::move(trace);
  result.inputs = std::move(result_inputs);
  return result;
}

void write_trace(const std::string& path, const std::vector<TraceEntry>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw preprocess::IoError("cannot write '" + path + "'");
  for (const auto& t : trace) {
    nlohmann::ordered_json doc;
    doc["id"] = t.id;
    doc["internal"] = t.internal_ids;
    doc["external"] = t.external_ids;
    doc["prompt_or_program"] = t.prompt_or_program;
    doc["prediction"] = t.prediction;
    doc["verdict"] = t.verdict;
    if (!t.failure.empty()) doc["failure"] = t.failure;
    out << doc.dump() << '\n';
  }
}

void write_inputs(const std::string& path, const std::vector<InputAudit>& inputs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw preprocess::IoError("cannot write '" + path + "'");
  for (const auto& in : inputs) {
    nlohmann::ordered_json doc;
    doc["id"] = in.id;
    doc["sentences"] = in.sentences;
    doc["truncated"] = in.truncated;
    doc["token_count"] = in.token_count;
    out << doc.dump() << '\n';
  }
}

}  // namespace finrag::pipeline

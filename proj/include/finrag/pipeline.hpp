#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "finrag/decoder.hpp"
#include "finrag/eval.hpp"
#include "finrag/llmgen.hpp"
#include "finrag/preprocess.hpp"
#include "finrag/retrieval.hpp"

namespace finrag::pipeline {

enum class Backend { Gold, Decoder, Endpoint };

std::string backend_name(Backend b);

struct PipelineConfig {
  Backend backend = Backend::Gold;
  double epsilon = llmgen::kDefaultEpsilon;
  size_t top_k_internal = 3;  // 3 or 5
  size_t top_k_external = 3;
  size_t token_budget = 512;
  size_t embed_dim = 64;
  uint64_t seed = 0;
  std::string definitions_path;  // empty: no external retrieval
  std::string embeddings_path;   // empty: embed definitions on the fly
  std::string checkpoint_path;   // Decoder backend
  std::string endpoint;          // Endpoint backend
  std::chrono::milliseconds endpoint_timeout{10000};
  llmgen::PromptMode prompt_mode = llmgen::PromptMode::FewShot;
  eval::SubsetRules subset_rules;
};

struct TraceEntry {
  std::string id;
  std::vector<std::string> internal_ids;
  std::vector<std::string> external_ids;
  std::string prompt_or_program;
  std::string prediction;
  std::string verdict;  // correct | incorrect | failure
  std::string failure;
};

struct InputAudit {
  std::string id;
  std::vector<std::string> sentences;
  bool truncated = false;
  size_t token_count = 0;
};

struct PipelineResult {
  eval::EvalReport report;
  std::vector<TraceEntry> trace;
  std::vector<InputAudit> inputs;
};

// preprocess -> internal ranking -> external definitions -> generator input
// -> generate -> evaluate. Per-record errors land in the report's failure
// list; the pipeline always completes.
PipelineResult run_pipeline(const std::vector<preprocess::QARecord>& records,
                            const PipelineConfig& config);

// One JSON object per record.
void write_trace(const std::string& path, const std::vector<TraceEntry>& trace);
// Audit file: the budgeted generator input of every record, one JSON line each.
void write_inputs(const std::string& path, const std::vector<InputAudit>& inputs);

// Internal ranking used by the pipeline: reference-embedder cosine between
// the question and each sentence.
std::vector<retrieval::ScoredSentence> score_sentences(
    const retrieval::HashedEmbedder& embedder, const std::string& question,
    const std::vector<preprocess::RankedSentence>& sentences);

// Candidate set for the decoder backend over retrieved facts: numbers from
// the retrieved sentences, rows from the record's table.
decoder::CandidateSet build_candidates(const preprocess::QARecord& record,
                                       const std::vector<preprocess::RankedSentence>& facts,
                                       const retrieval::HashedEmbedder& embedder);

}  // namespace finrag::pipeline

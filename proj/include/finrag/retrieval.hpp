#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "finrag/common.hpp"

namespace finrag::retrieval {

class RetrievalError : public Error {
 public:
  enum class Kind {
    ZeroVector,
    NotNormalized,
    BadK,
    DimensionMismatch,
    EmptyGold,
    EmptyInput,
    BadFile,
  };
  RetrievalError(Kind kind, const std::string& msg) : Error(tag(kind), msg), kind_(kind) {}
  Kind retrieval_kind() const { return kind_; }

 private:
  static std::string tag(Kind k) {
    switch (k) {
      case Kind::ZeroVector: return "zero_vector";
      case Kind::NotNormalized: return "not_normalized";
      case Kind::BadK: return "bad_k";
      case Kind::DimensionMismatch: return "dimension_mismatch";
      case Kind::EmptyGold: return "empty_gold";
      case Kind::EmptyInput: return "empty_input";
      case Kind::BadFile: return "bad_file";
    }
    return "retrieval";
  }
  Kind kind_;
};

// N x d row-major float32 vectors with one id per row.
struct EmbeddingMatrix {
  size_t n = 0;
  size_t d = 0;
  std::vector<float> data;
  std::vector<std::string> ids;
  bool normalized = false;

  const float* row(size_t i) const { return data.data() + i * d; }
  float* row(size_t i) { return data.data() + i * d; }
};

enum class FactSource { Internal, External };

struct RankedItem {
  std::string id;
  double score = 0.0;
  std::string payload;
};

// Scores non-increasing; ties keep ascending original order.
struct RankedFacts {
  std::vector<RankedItem> items;
  FactSource source = FactSource::Internal;
};

struct DefinitionEntry {
  std::string term;
  std::string summary;
};

// Divides every row by its Euclidean norm. Rows with norm < 1e-12 raise
// ZeroVector with the row id.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

// Exact inner-product index over normalized embeddings.
class FlatIndex {
 public:
  static FlatIndex build(EmbeddingMatrix m);  // NotNormalized unless m.normalized

  size_t size() const { return matrix_.n; }
  size_t dim() const { return matrix_.d; }
  const EmbeddingMatrix& matrix() const { return matrix_; }

  // Top-k rows by inner product; ties broken by ascending row position.
  RankedFacts search(const std::vector<float>& query, size_t k) const;

 private:
  explicit FlatIndex(EmbeddingMatrix m) : matrix_(std::move(m)) {}
  EmbeddingMatrix matrix_;
};

struct ScoredSentence {
  std::string id;
  double logit = 0.0;
  std::string text;
};

// Top-k sentences by logit, stable on ties, k capped at the input size.
RankedFacts rank_sentences(const std::vector<ScoredSentence>& scores, size_t k);

// |top-k of predicted ∩ gold| / |gold|.
double recall_at_k(const RankedFacts& predicted, const std::set<std::string>& gold, size_t k);

struct SummaryStats {
  double median = 0.0;
  double mean = 0.0;
};

SummaryStats summary_stats(const std::vector<double>& scores);

// Deterministic hashed bag-of-words embedder; stands in for a pretrained
// sentence encoder in self-contained runs. Output is unnormalized.
class HashedEmbedder {
 public:
  explicit HashedEmbedder(size_t dim, uint64_t seed = 1) : dim_(dim), seed_(seed) {}
  size_t dim() const { return dim_; }
  std::vector<float> embed(const std::string& text) const;
  EmbeddingMatrix embed_all(const std::vector<std::string>& ids,
                            const std::vector<std::string>& texts) const;

 private:
  size_t dim_;
  uint64_t seed_;
};

// Binary embedding file: magic "FEMB", u32 version, u64 N, u32 d
// (little-endian), N*d float32, then N newline-delimited ids.
void write_embeddings(const std::string& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings(const std::string& path);

std::vector<DefinitionEntry> load_definitions(const std::string& path);

}  // namespace finrag::retrieval

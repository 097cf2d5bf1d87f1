#include "finrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace finrag::retrieval {

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  for (size_t i = 0; i < m.n; ++i) {
    const float* src = m.row(i);
    double sq = 0.0;
    for (size_t j = 0; j < m.d; ++j) sq += static_cast<double>(src[j]) * src[j];
    double norm = std::sqrt(sq);
    if (norm < 1e-12) {
      throw RetrievalError(RetrievalError::Kind::ZeroVector,
                           "zero-norm row '" + (i < m.ids.size() ? m.ids[i] : std::to_string(i)) +
                               "'");
    }
    float* dst = out.row(i);
    for (size_t j = 0; j < m.d; ++j) dst[j] = static_cast<float>(src[j] / norm);
  }
  out.normalized = true;
  return out;
}

FlatIndex FlatIndex::build(EmbeddingMatrix m) {
  if (!m.normalized) {
    throw RetrievalError(RetrievalError::Kind::NotNormalized,
                         "index requires L2-normalized embeddings");
  }
  return FlatIndex(std::move(m));
}

RankedFacts FlatIndex::search(const std::vector<float>& query, size_t k) const {
  if (query.size() != matrix_.d) {
    throw RetrievalError(RetrievalError::Kind::DimensionMismatch,
                         "query dimension " + std::to_string(query.size()) + " != index " +
                             std::to_string(matrix_.d));
  }
  if (k < 1 || k > matrix_.n) {
    throw RetrievalError(RetrievalError::Kind::BadK,
                         "k=" + std::to_string(k) + " outside [1, " +
                             std::to_string(matrix_.n) + "]");
  }
  std::vector<double> scores(matrix_.n);
  for (size_t i = 0; i < matrix_.n; ++i) {
    const float* v = matrix_.row(i);
    double dot = 0.0;
    for (size_t j = 0; j < matrix_.d; ++j) dot += static_cast<double>(v[j]) * query[j];
    scores[i] = dot;
  }
  std::vector<size_t> order(matrix_.n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  RankedFacts out;
  out.source = FactSource::External;
  for (size_t i = 0; i < k; ++i) {
    out.items.push_back({matrix_.ids[order[i]], scores[order[i]], ""});
  }
  return out;
}

RankedFacts rank_sentences(const std::vector<ScoredSentence>& scores, size_t k) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a].logit > scores[b].logit; });
  RankedFacts out;
  out.source = FactSource::Internal;
  size_t take = std::min(k, scores.size());
  for (size_t i = 0; i < take; ++i) {
    const auto& s = scores[order[i]];
    out.items.push_back({s.id, s.logit, s.text});
  }
  return out;
}

double recall_at_k(const RankedFacts& predicted, const std::set<std::string>& gold, size_t k) {
  if (gold.empty()) {
    throw RetrievalError(RetrievalError::Kind::EmptyGold, "recall needs a non-empty gold set");
  }
  size_t hits = 0;
  size_t take = std::min(k, predicted.items.size());
  for (size_t i = 0; i < take; ++i) {
    if (gold.count(predicted.items[i].id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

SummaryStats summary_stats(const std::vector<double>& scores) {
  if (scores.empty()) {
    throw RetrievalError(RetrievalError::Kind::EmptyInput, "summary_stats needs scores");
  }
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  SummaryStats out;
  size_t n = sorted.size();
  out.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  out.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  return out;
}

std::vector<float> HashedEmbedder::embed(const std::string& text) const {
  std::vector<float> v(dim_, 0.0f);
  for (const std::string& tok : whitespace_tokens(lowercase(text))) {
    uint64_t h = stable_hash(tok, seed_);
    size_t slot = h % dim_;
    float sign = ((h >> 32) & 1) ? 1.0f : -1.0f;
    v[slot] += sign;
    // second slot reduces collisions at small dimensions
    uint64_t h2 = stable_hash(tok, seed_ ^ 0x5bd1e995u);
    v[h2 % dim_] += ((h2 >> 32) & 1) ? 0.5f : -0.5f;
  }
  return v;
}

EmbeddingMatrix HashedEmbedder::embed_all(const std::vector<std::string>& ids,
                                          const std::vector<std::string>& texts) const {
  EmbeddingMatrix m;
  m.n = texts.size();
  m.d = dim_;
  m.ids = ids;
  m.data.resize(m.n * m.d);
  for (size_t i = 0; i < texts.size(); ++i) {
    auto v = embed(texts[i]);
    std::copy(v.begin(), v.end(), m.row(i));
  }
  return m;
}

// ---------------------------------------------------------------------------
// FEMB file format

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
uint64_t get_u64(const char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

constexpr uint32_t kFembVersion = 1;

}  // namespace

void write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  std::string header = "FEMB";
  put_u32(header, kFembVersion);
  put_u64(header, m.n);
  put_u32(header, static_cast<uint32_t>(m.d));

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw RetrievalError(RetrievalError::Kind::BadFile, "cannot write '" + path + "'");
  }
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (float f : m.data) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                 static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }
  for (const std::string& id : m.ids) {
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    out.put('\n');
  }
}

EmbeddingMatrix read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RetrievalError(RetrievalError::Kind::BadFile, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 20 || bytes.compare(0, 4, "FEMB") != 0) {
    throw RetrievalError(RetrievalError::Kind::BadFile, "'" + path + "' is not an FEMB file");
  }
  uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFembVersion) {
    throw RetrievalError(RetrievalError::Kind::BadFile,
                         "unsupported FEMB version " + std::to_string(version));
  }
  EmbeddingMatrix m;
  m.n = get_u64(bytes.data() + 8);
  m.d = get_u32(bytes.data() + 16);
  size_t float_bytes = m.n * m.d * 4;
  if (bytes.size() < 20 + float_bytes) {
    throw RetrievalError(RetrievalError::Kind::BadFile, "truncated FEMB file");
  }
  m.data.resize(m.n * m.d);
  for (size_t i = 0; i < m.data.size(); ++i) {
    uint32_t bits = get_u32(bytes.data() + 20 + i * 4);
    std::memcpy(&m.data[i], &bits, 4);
  }
  size_t pos = 20 + float_bytes;
  for (size_t i = 0; i < m.n; ++i) {
    size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) {
      throw RetrievalError(RetrievalError::Kind::BadFile, "missing id lines in FEMB file");
    }
    m.ids.push_back(bytes.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return m;
}

std::vector<DefinitionEntry> load_definitions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RetrievalError(RetrievalError::Kind::BadFile, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw RetrievalError(RetrievalError::Kind::BadFile,
                         "'" + path + "': invalid JSON: " + e.what());
  }
  if (!doc.is_array()) {
    throw RetrievalError(RetrievalError::Kind::BadFile, "expected a JSON array of definitions");
  }
  std::vector<DefinitionEntry> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("term") || !item.contains("summary")) {
      throw RetrievalError(RetrievalError::Kind::BadFile,
                           "definition entries need 'term' and 'summary'");
    }
    DefinitionEntry e{item["term"].get<std::string>(), item["summary"].get<std::string>()};
    if (e.summary.empty()) {
      throw RetrievalError(RetrievalError::Kind::BadFile,
                           "definition '" + e.term + "' has an empty summary");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace finrag::retrieval

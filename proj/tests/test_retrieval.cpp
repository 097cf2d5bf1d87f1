#include "finrag/retrieval.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "doctest.h"

#include "finrag/common.hpp"

using namespace finrag;
using namespace finrag::retrieval;

namespace {

EmbeddingMatrix make_matrix(const std::vector<std::vector<float>>& rows) {
  EmbeddingMatrix m;
  m.n = rows.size();
  m.d = rows.empty() ? 0 : rows[0].size();
  for (size_t i = 0; i < rows.size(); ++i) {
    m.ids.push_back("v" + std::to_string(i));
    m.data.insert(m.data.end(), rows[i].begin(), rows[i].end());
  }
  return m;
}

EmbeddingMatrix random_matrix(size_t n, size_t d, Rng& rng) {
  EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  m.data.resize(n * d);
  for (auto& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (size_t i = 0; i < n; ++i) m.ids.push_back("v" + std::to_string(i));
  return m;
}

// independent linear-scan ranking used to cross-check FlatIndex
std::vector<std::pair<std::string, double>> scan_oracle(const EmbeddingMatrix& m,
                                                        const std::vector<float>& q,
                                                        size_t k) {
  std::vector<std::pair<double, size_t>> scored;
  for (size_t i = 0; i < m.n; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < m.d; ++j) s += static_cast<double>(m.row(i)[j]) * q[j];
    scored.emplace_back(s, i);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::pair<std::string, double>> out;
  for (size_t i = 0; i < k; ++i) out.emplace_back(m.ids[scored[i].second], scored[i].first);
  return out;
}

}  // namespace

TEST_CASE("l2_normalize: 3-4-5 row") {
  auto m = l2_normalize(make_matrix({{3, 4}}));
  CHECK(m.normalized);
  CHECK(m.row(0)[0] == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(m.row(0)[1] == doctest::Approx(0.8).epsilon(1e-7));
}

TEST_CASE("l2_normalize: unit rows unchanged, zero rows rejected") {
  auto unit = l2_normalize(make_matrix({{0.6f, 0.8f}}));
  CHECK(std::fabs(unit.row(0)[0] - 0.6) < 1e-7);
  try {
    l2_normalize(make_matrix({{1, 0}, {0, 0}}));
    FAIL("expected ZeroVector");
  } catch (const RetrievalError& e) {
    CHECK(e.retrieval_kind() == RetrievalError::Kind::ZeroVector);
    CHECK(std::string(e.what()).find("v1") != std::string::npos);
  }
}

TEST_CASE("l2_normalize: unit norms and cosine equivalence") {
  Rng rng(1);
  auto m = l2_normalize(random_matrix(20, 8, rng));
  for (size_t i = 0; i < m.n; ++i) {
    double sq = 0.0;
    for (size_t j = 0; j < m.d; ++j) sq += static_cast<double>(m.row(i)[j]) * m.row(i)[j];
    CHECK(std::fabs(std::sqrt(sq) - 1.0) < 1e-6);
  }
}

TEST_CASE("build_index: guards and size") {
  auto raw = make_matrix({{1, 0}, {0, 1}, {1, 1}});
  try {
    FlatIndex::build(raw);
    FAIL("expected NotNormalized");
  } catch (const RetrievalError& e) {
    CHECK(e.retrieval_kind() == RetrievalError::Kind::NotNormalized);
  }
  auto index = FlatIndex::build(l2_normalize(raw));
  CHECK(index.size() == 3);
}

TEST_CASE("search: stored vector retrieves itself with score 1") {
  Rng rng(2);
  auto index = FlatIndex::build(l2_normalize(random_matrix(30, 16, rng)));
  std::vector<float> q(index.matrix().row(7), index.matrix().row(7) + 16);
  auto hits = index.search(q, 3);
  CHECK(hits.items[0].id == "v7");
  CHECK(std::fabs(hits.items[0].score - 1.0) < 1e-6);
}

TEST_CASE("search: full ranking is non-increasing; bad arguments throw") {
  Rng rng(3);
  auto index = FlatIndex::build(l2_normalize(random_matrix(12, 8, rng)));
  std::vector<float> q(8, 0.1f);
  auto hits = index.search(q, index.size());
  for (size_t i = 1; i < hits.items.size(); ++i) {
    CHECK(hits.items[i - 1].score >= hits.items[i].score);
  }
  CHECK_THROWS_AS(index.search(q, 0), RetrievalError);
  CHECK_THROWS_AS(index.search(q, index.size() + 1), RetrievalError);
  CHECK_THROWS_AS(index.search(std::vector<float>(5, 0.1f), 1), RetrievalError);
}

TEST_CASE("search: ties break by ascending position") {
  EmbeddingMatrix m = make_matrix({{1, 0}, {1, 0}, {0, 1}});
  auto index = FlatIndex::build(l2_normalize(m));
  auto hits = index.search({1, 0}, 3);
  CHECK(hits.items[0].id == "v0");
  CHECK(hits.items[1].id == "v1");
}

TEST_CASE("search: agrees with a linear-scan oracle") {
  Rng rng(4);
  auto index = FlatIndex::build(l2_normalize(random_matrix(200, 32, rng)));
  for (int trial = 0; trial < 200; ++trial) {
    auto qm = l2_normalize(random_matrix(1, 32, rng));
    std::vector<float> q(qm.row(0), qm.row(0) + 32);
    size_t k = 1 + static_cast<size_t>(rng.uniform_int(0, 9));
    auto hits = index.search(q, k);
    auto expected = scan_oracle(index.matrix(), q, k);
    REQUIRE(hits.items.size() == expected.size());
    for (size_t i = 0; i < k; ++i) {
      CHECK(hits.items[i].id == expected[i].first);
      CHECK(std::fabs(hits.items[i].score - expected[i].second) < 1e-9);
    }
  }
}

TEST_CASE("search: ranking invariant to pre-normalization scaling") {
  Rng rng(5);
  auto raw = random_matrix(40, 16, rng);
  auto index_a = FlatIndex::build(l2_normalize(raw));
  for (size_t j = 0; j < raw.d; ++j) raw.row(11)[j] *= 37.5f;
  auto index_b = FlatIndex::build(l2_normalize(raw));
  for (int trial = 0; trial < 50; ++trial) {
    auto qm = l2_normalize(random_matrix(1, 16, rng));
    std::vector<float> q(qm.row(0), qm.row(0) + 16);
    auto a = index_a.search(q, 5);
    auto b = index_b.search(q, 5);
    for (size_t i = 0; i < 5; ++i) {
      CHECK(a.items[i].id == b.items[i].id);
      CHECK(std::fabs(a.items[i].score - b.items[i].score) < 1e-5);
    }
  }
}

TEST_CASE("rank_sentences: ordering, capping, stable ties") {
  std::vector<ScoredSentence> scores = {
      {"s0", 0.9, "a"}, {"s1", 0.1, "b"}, {"s2", 0.8, "c"}};
  auto top2 = rank_sentences(scores, 2);
  REQUIRE(top2.items.size() == 2);
  CHECK(top2.items[0].id == "s0");
  CHECK(top2.items[1].id == "s2");

  auto capped = rank_sentences(scores, 5);
  CHECK(capped.items.size() == 3);

  std::vector<ScoredSentence> ties = {{"a", 0.5, ""}, {"b", 0.5, ""}, {"c", 0.5, ""}};
  auto ranked = rank_sentences(ties, 3);
  CHECK(ranked.items[0].id == "a");
  CHECK(ranked.items[1].id == "b");
  CHECK(ranked.items[2].id == "c");
}

TEST_CASE("recall_at_k: documented cases") {
  RankedFacts facts;
  facts.items = {{"a", 0.9, ""}, {"x", 0.8, ""}, {"b", 0.7, ""}, {"y", 0.6, ""}};
  CHECK(recall_at_k(facts, {"a", "b"}, 3) == 1.0);
  CHECK(recall_at_k(facts, {"a", "y"}, 3) == 0.5);
  CHECK_THROWS_AS(recall_at_k(facts, {}, 3), RetrievalError);
}

TEST_CASE("recall_at_k: monotone non-decreasing in k") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    RankedFacts facts;
    int n = rng.uniform_int(1, 12);
    for (int i = 0; i < n; ++i) {
      facts.items.push_back({"s" + std::to_string(i), 1.0 - 0.01 * i, ""});
    }
    std::set<std::string> gold;
    for (int i = 0; i < rng.uniform_int(1, 4); ++i) {
      gold.insert("s" + std::to_string(rng.uniform_int(0, 14)));
    }
    double prev = 0.0;
    for (size_t k = 1; k <= facts.items.size() + 2; ++k) {
      double r = recall_at_k(facts, gold, k);
      CHECK(r >= prev);
      CHECK(r <= 1.0);
      prev = r;
    }
  }
}

TEST_CASE("summary_stats: medians, means, permutation invariance") {
  auto s = summary_stats({0.8, 0.9, 1.0});
  CHECK(s.median == doctest::Approx(0.9));
  CHECK(s.mean == doctest::Approx(0.9));
  CHECK(summary_stats({1, 2, 3, 4}).median == 2.5);
  auto single = summary_stats({0.5});
  CHECK(single.median == 0.5);
  CHECK(single.mean == 0.5);
  auto a = summary_stats({3, 1, 2, 5, 4});
  auto b = summary_stats({5, 4, 3, 2, 1});
  CHECK(a.median == b.median);
  CHECK(a.mean == b.mean);
  CHECK_THROWS_AS(summary_stats({}), RetrievalError);
}

TEST_CASE("hashed embedder: deterministic and seed-sensitive") {
  HashedEmbedder e1(32), e2(32), other(32, 99);
  auto a = e1.embed("operating income rose");
  auto b = e2.embed("operating income rose");
  CHECK(a == b);
  CHECK(a != other.embed("operating income rose"));
  CHECK(a != e1.embed("operating income fell"));
}

TEST_CASE("embedding file round-trips") {
  Rng rng(7);
  auto m = l2_normalize(random_matrix(9, 12, rng));
  m.ids[3] = "term with spaces";
  std::string path = "/tmp/finrag_test_emb.femb";
  write_embeddings(path, m);
  auto back = read_embeddings(path);
  CHECK(back.n == m.n);
  CHECK(back.d == m.d);
  CHECK(back.data == m.data);
  CHECK(back.ids == m.ids);
  CHECK_FALSE(back.normalized);  // the flag is not persisted
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_embeddings("/nonexistent.femb"), RetrievalError);
  std::string bad = "/tmp/finrag_test_bad.femb";
  {
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("NOPExxxxxxxxxxxxxxxxxxxx", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_embeddings(bad), RetrievalError);
  std::remove(bad.c_str());
}

TEST_CASE("definition corpus loads and validates") {
  auto defs = load_definitions(std::string(FINRAG_FIXTURE_DIR) + "/definitions.json");
  CHECK(defs.size() == 25);
  for (const auto& d : defs) {
    CHECK_FALSE(d.term.empty());
    CHECK_FALSE(d.summary.empty());
  }
}

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "okra/errors.hpp"
#include "okra/retrieval.hpp"
#include "oracles.hpp"

using namespace okra;

namespace {

std::vector<std::string> texts(const ChunkIndex& index) {
  std::vector<std::string> out;
  for (const auto& c : index.chunks()) out.push_back(c.text);
  return out;
}

}  // namespace

TEST(Bm25, MatchesBruteForceOnNamedEntityQuery) {
  auto s = fixtures::stack(fixtures::corpus({
      {"welch", "Raquel Welch starred in 100 Rifles alongside Jim Brown."},
      {"bio", "Raquel Welch was an actress."},
      {"rifle", "A rifle is a long gun. Rifles have grooved barrels."},
      {"other", "Welch is a surname of Welsh origin."},
      {"none", "Completely unrelated prose about rivers."},
  }));
  auto gi = s.catalog->at(512);
  auto got = gi->sparse.score("raquel welch", 10);
  auto want = oracle::bm25(texts(*gi->chunks), "raquel welch");

  std::size_t positive = 0;
  for (double w : want) positive += w > 0 ? 1 : 0;
  ASSERT_EQ(got.size(), positive);
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got[i].raw_score, want[to_underlying(got[i].id)], 1e-9);
    if (i) EXPECT_GE(got[i - 1].raw_score, got[i].raw_score);
  }
  EXPECT_EQ(to_underlying(got.front().id), 1u);  // both terms, shorter than doc 0
}

TEST(Bm25, RandomCorporaAgreeWithOracle) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::pair<std::string, std::string>> docs;
    std::size_t n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) docs.emplace_back("d" + std::to_string(i), fixtures::random_words(rng, 5 + rng() % 60));
    auto s = fixtures::stack(fixtures::corpus(docs));
    auto gi = s.catalog->at(1 + rng() % 20);
    auto query = fixtures::random_words(rng, 1 + rng() % 4);
    auto want = oracle::bm25(texts(*gi->chunks), query);
    for (const auto& sc : gi->sparse.score(query, 1000)) {
      EXPECT_NEAR(sc.raw_score, want[to_underlying(sc.id)], 1e-9);
    }
  }
}

TEST(Bm25, EdgeCases) {
  auto s = fixtures::stack(fixtures::corpus({{"a", "alpha beta"}, {"b", "gamma"}}));
  auto gi = s.catalog->at(150);
  EXPECT_TRUE(gi->sparse.score("", 5).empty());
  EXPECT_TRUE(gi->sparse.score("?!", 5).empty());
  EXPECT_TRUE(gi->sparse.score("zeta", 5).empty());
  EXPECT_THROW(gi->sparse.score("alpha", 0), RetrievalError);
  // Repeated query terms count once.
  EXPECT_DOUBLE_EQ(gi->sparse.score("alpha alpha", 5)[0].raw_score, gi->sparse.score("alpha", 5)[0].raw_score);
}

TEST(Cosine, ExhaustiveAgainstOracle) {
  std::mt19937 rng(3);
  std::normal_distribution<float> d;
  for (int t = 0; t < 200; ++t) {
    std::size_t dim = 1 + rng() % 32;
    std::vector<float> a(dim), b(dim);
    for (auto& x : a) x = d(rng);
    for (auto& x : b) x = d(rng);
    EXPECT_NEAR(cosine_similarity(a, b), oracle::cosine(a, b), 1e-6);
  }
  std::vector<float> zero(4, 0.0F), one{1, 0, 0, 0};
  EXPECT_EQ(cosine_similarity(zero, one), 0.0);
  EXPECT_NEAR(cosine_similarity(one, one), 1.0, 1e-12);
}

TEST(Dense, ScoresEveryChunkByCosine) {
  auto s = fixtures::stack(fixtures::corpus({{"a", "river campus"}, {"b", "film director"}, {"c", "!!!"}}));
  auto gi = s.catalog->at(150);
  std::string q = "campus river north";
  auto qv = s.embedder->embed(std::span<const std::string>(&q, 1)).front();
  auto got = gi->dense.score(qv, 10);
  ASSERT_EQ(got.size(), 3u);
  for (const auto& sc : got) {
    std::vector<float> v(gi->dense.vector(to_underlying(sc.id)).begin(), gi->dense.vector(to_underlying(sc.id)).end());
    EXPECT_NEAR(sc.raw_score, oracle::cosine(qv, v), 1e-6);
  }
  EXPECT_EQ(to_underlying(got.front().id), 0u);
}

TEST(HashingEmbedder, DeterministicAndSeeded) {
  auto tok = fixtures::tokenizer();
  HashingEmbedder a(tok), b(tok), c(tok, 256, 99);
  std::vector<std::string> in{"Raquel Welch", "raquel, WELCH!"};
  auto va = a.embed(in);
  EXPECT_EQ(va, b.embed(in));
  EXPECT_EQ(va[0], va[1]);
  EXPECT_NE(va, c.embed(in));
  EXPECT_EQ(va[0].size(), 256u);
  EXPECT_NE(a.id(), c.id());
}

TEST(MinMax, NormalizesAndHandlesDegenerateInput) {
  auto n = minmax_normalize({{ChunkId{0}, 3.0, 0}, {ChunkId{1}, 1.0, 0}, {ChunkId{2}, 2.0, 0}});
  EXPECT_DOUBLE_EQ(n[0].normalized_score, 1.0);
  EXPECT_DOUBLE_EQ(n[1].normalized_score, 0.0);
  EXPECT_DOUBLE_EQ(n[2].normalized_score, 0.5);
  auto single = minmax_normalize({{ChunkId{4}, 0.2, 0}});
  EXPECT_DOUBLE_EQ(single[0].normalized_score, 1.0);
  auto flat = minmax_normalize({{ChunkId{0}, 2.0, 0}, {ChunkId{1}, 2.0, 0}});
  EXPECT_DOUBLE_EQ(flat[1].normalized_score, 1.0);
  EXPECT_TRUE(minmax_normalize({}).empty());
}

TEST(MinMax, Idempotent) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-3, 9);
  for (int t = 0; t < 50; ++t) {
    std::vector<ScoredChunk> xs;
    for (std::uint32_t i = 0; i < 1 + rng() % 20; ++i) xs.push_back({ChunkId{i}, u(rng), 0});
    auto once = minmax_normalize(xs);
    auto as_raw = once;
    for (auto& x : as_raw) x.raw_score = x.normalized_score;
    auto twice = minmax_normalize(as_raw);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i].normalized_score, twice[i].normalized_score, 1e-12);
  }
}

TEST(FusionWeights, NormalizesAndValidates) {
  FusionWeights w(3, 2);
  EXPECT_DOUBLE_EQ(w.exact(), 0.6);
  EXPECT_DOUBLE_EQ(w.semantic(), 0.4);
  EXPECT_THROW(FusionWeights(-1, 2), RetrievalError);
  EXPECT_THROW(FusionWeights(0, 0), RetrievalError);
}

TEST(Fusion, WorkedExample) {
  std::vector<ScoredChunk> exact{{ChunkId{0}, 5, 1.0}, {ChunkId{1}, 1, 0.0}};
  std::vector<ScoredChunk> semantic{{ChunkId{1}, 0.9, 1.0}, {ChunkId{0}, 0.1, 0.0}};
  auto r = fuse_and_rank(exact, semantic, FusionWeights(3, 2), 0.1, 10);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(to_underlying(r.entries[0].id), 0u);
  EXPECT_NEAR(r.entries[0].fused, 0.6, 1e-12);
  EXPECT_NEAR(r.entries[1].fused, 0.4, 1e-12);
}

TEST(Fusion, ThresholdIsRelativeToTop) {
  std::vector<ScoredChunk> exact{{ChunkId{0}, 0, 0.8}, {ChunkId{1}, 0, 0.079}, {ChunkId{2}, 0, 0.081}};
  auto r = fuse_and_rank(exact, {}, FusionWeights(1, 0), 0.1, 10);
  ASSERT_EQ(r.entries.size(), 2u);
  for (const auto& e : r.entries) EXPECT_GE(e.fused, 0.08 - 1e-12);
  EXPECT_THROW(fuse_and_rank(exact, {}, FusionWeights(), 1.0, 10), RetrievalError);
  EXPECT_THROW(fuse_and_rank(exact, {}, FusionWeights(), -0.1, 10), RetrievalError);
  EXPECT_TRUE(fuse_and_rank({}, {}, FusionWeights(), 0.1, 10).entries.empty());
}

TEST(Fusion, ExactOnlyWeightsReproduceExactRanking) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<ScoredChunk> exact, semantic;
    for (std::uint32_t i = 0; i < 15; ++i) {
      if (rng() % 2) exact.push_back({ChunkId{i}, 0, u(rng)});
      if (rng() % 2) semantic.push_back({ChunkId{i}, 0, u(rng)});
    }
    auto r = fuse_and_rank(exact, semantic, FusionWeights(1, 0), 0.0, 100);
    std::vector<std::uint32_t> got;
    for (const auto& e : r.entries) {
      bool on_exact = std::any_of(exact.begin(), exact.end(), [&](auto& x) { return x.id == e.id; });
      if (on_exact) got.push_back(to_underlying(e.id));
    }
    auto sorted = exact;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) {
      return a.normalized_score != b.normalized_score ? a.normalized_score > b.normalized_score : a.id < b.id;
    });
    std::vector<std::uint32_t> want;
    for (const auto& x : sorted) want.push_back(to_underlying(x.id));
    EXPECT_EQ(got, want);
  }
}

TEST(Fusion, RaisingAScoreNeverLowersRank) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<ScoredChunk> exact, semantic;
    for (std::uint32_t i = 0; i < 10; ++i) {
      exact.push_back({ChunkId{i}, 0, u(rng)});
      semantic.push_back({ChunkId{i}, 0, u(rng)});
    }
    FusionWeights w(u(rng) + 0.01, u(rng) + 0.01);
    auto rank_of = [](const RankedContext& r, std::uint32_t id) {
      for (std::size_t i = 0; i < r.entries.size(); ++i)
        if (to_underlying(r.entries[i].id) == id) return i;
      return r.entries.size();
    };
    std::uint32_t target = rng() % 10;
    auto before = rank_of(fuse_and_rank(exact, semantic, w, 0.0, 100), target);
    exact[target].normalized_score = std::min(1.0, exact[target].normalized_score + 0.3);
    auto after = rank_of(fuse_and_rank(exact, semantic, w, 0.0, 100), target);
    EXPECT_LE(after, before);
  }
}

TEST(Catalog, RetrieveMatchesExhaustiveOracle) {
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::pair<std::string, std::string>> docs;
    for (std::size_t i = 0, n = 1 + rng() % 6; i < n; ++i)
      docs.emplace_back("d" + std::to_string(i), fixtures::random_words(rng, 10 + rng() % 80));
    auto s = fixtures::stack(fixtures::corpus(docs));
    std::size_t g = 5 + rng() % 30;
    auto gi = s.catalog->at(g);
    if (gi->chunks->size() > 50) continue;

    RetrievalRequest req{g, 1 + rng() % 8, FusionWeights(u(rng), u(rng) + 0.01), u(rng) * 0.9, 1 + rng() % 25};
    auto query = fixtures::random_words(rng, 1 + rng() % 3);
    auto got = s.catalog->retrieve(query, req);

    auto chunk_texts = texts(*gi->chunks);
    auto bm = oracle::bm25(chunk_texts, query);
    std::string q(query);
    auto qv = s.embedder->embed(std::span<const std::string>(&q, 1)).front();
    auto vecs = s.embedder->embed(chunk_texts);
    std::vector<double> cos;
    for (const auto& v : vecs) cos.push_back(oracle::cosine(qv, v));
    auto ex = oracle::normalize(oracle::top_pool(bm, req.fusion_pool, [](double x) { return x > 0; }));
    auto se = oracle::normalize(oracle::top_pool(cos, req.fusion_pool, [](double) { return true; }));
    auto want = oracle::fuse(ex, se, req.weights.exact(), req.weights.semantic(), req.threshold, req.top_k);

    ASSERT_EQ(got.entries.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(to_underlying(got.entries[i].id), want[i].id) << "trial " << trial << " rank " << i;
      EXPECT_NEAR(got.entries[i].fused, want[i].score, 1e-9);
    }
  }
}

TEST(Catalog, BuildsEachGranularityOnce) {
  auto s = fixtures::stack(fixtures::corpus({{"a", "alpha beta gamma delta"}}));
  s.catalog->retrieve("alpha", {150, 3, FusionWeights(), 0.1, 20});
  s.catalog->retrieve("beta", {150, 3, FusionWeights(), 0.1, 20});
  EXPECT_EQ(s.catalog->retriever_builds(), 1u);
  s.catalog->retrieve("beta", {2, 3, FusionWeights(), 0.1, 20});
  EXPECT_EQ(s.catalog->retriever_builds(), 2u);
  EXPECT_THROW(s.catalog->retrieve("x", {150, 0, FusionWeights(), 0.1, 20}), RetrievalError);
}

TEST(Catalog, DenseVectorsSurvivePersistence) {
  auto dir = std::filesystem::temp_directory_path() / ("okra_dense_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto s = fixtures::stack(fixtures::corpus({{"a", "river campus acres"}, {"b", "film director born"}}));
  auto before = s.catalog->retrieve("campus", {150, 2, FusionWeights(), 0.0, 20});
  s.catalog->persist(dir);

  auto store = std::shared_ptr<CorpusStore>(CorpusStore::open(dir, s.tok));
  IndexCatalog reopened(store, s.embedder);
  reopened.load_dense(dir);
  auto after = reopened.retrieve("campus", {150, 2, FusionWeights(), 0.0, 20});
  ASSERT_EQ(before.entries.size(), after.entries.size());
  for (std::size_t i = 0; i < before.entries.size(); ++i) {
    EXPECT_EQ(before.entries[i].id, after.entries[i].id);
    EXPECT_DOUBLE_EQ(before.entries[i].fused, after.entries[i].fused);
  }
  std::filesystem::remove_all(dir);
}

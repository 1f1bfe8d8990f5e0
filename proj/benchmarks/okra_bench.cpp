#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "okra/corpus.hpp"
#include "okra/engine.hpp"
#include "okra/gateway.hpp"
#include "okra/retrieval.hpp"
#include "okra/tokenizer.hpp"

using namespace okra;

namespace {

std::string words(std::mt19937& rng, std::size_t n) {
  static const char* vocab[] = {"river", "campus", "acres", "film",    "director", "born",   "western", "actress",
                                "year",  "city",   "north", "revenue", "table",    "growth", "market",  "harbour",
                                "grain", "archive", "vault", "signal", "orbit",    "ledger", "meadow",  "copper"};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(vocab) - 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += (i % 12 == 0) ? ". " : " ";
    out += vocab[pick(rng)];
  }
  return out + ".";
}

std::shared_ptr<const Corpus> synthetic_corpus(std::size_t docs, std::size_t words_per_doc) {
  std::mt19937 rng(7);
  std::vector<Document> out;
  for (std::size_t i = 0; i < docs; ++i) out.push_back({"doc" + std::to_string(i), words(rng, words_per_doc), ""});
  return std::make_shared<const Corpus>(std::move(out));
}

struct Stack {
  std::shared_ptr<const Tokenizer> tok = make_tokenizer("ws-punct-v1");
  std::shared_ptr<CorpusStore> store;
  std::shared_ptr<const EmbeddingProvider> embedder;
  std::unique_ptr<IndexCatalog> catalog;

  explicit Stack(std::shared_ptr<const Corpus> corpus)
      : store(std::make_shared<CorpusStore>(std::move(corpus), tok)),
        embedder(std::make_shared<HashingEmbedder>(tok)),
        catalog(std::make_unique<IndexCatalog>(store, embedder)) {}
};

void BM_Tokenize(benchmark::State& state) {
  std::mt19937 rng(1);
  auto tok = make_tokenizer("ws-punct-v1");
  auto text = words(rng, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tok->count(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_Tokenize)->Arg(1000)->Arg(100000);

void BM_ChunkDocument(benchmark::State& state) {
  std::mt19937 rng(2);
  auto tok = make_tokenizer("ws-punct-v1");
  Document doc{"d", words(rng, 50000), ""};
  auto g = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(chunk_document(doc, g, *tok, 0, ChunkId{0}));
}
BENCHMARK(BM_ChunkDocument)->Arg(150)->Arg(512);

void BM_Bm25Score(benchmark::State& state) {
  Stack s(synthetic_corpus(static_cast<std::size_t>(state.range(0)), 400));
  auto gi = s.catalog->at(150);
  for (auto _ : state) benchmark::DoNotOptimize(gi->sparse.score("vault archive copper meadow", 20));
  state.counters["chunks"] = static_cast<double>(gi->chunks->size());
}
BENCHMARK(BM_Bm25Score)->Arg(100)->Arg(1000);

void BM_DenseScore(benchmark::State& state) {
  Stack s(synthetic_corpus(static_cast<std::size_t>(state.range(0)), 400));
  auto gi = s.catalog->at(150);
  for (auto _ : state) benchmark::DoNotOptimize(s.catalog->retrieve_semantic("vault archive copper meadow", 150, 20));
  state.counters["chunks"] = static_cast<double>(gi->chunks->size());
}
BENCHMARK(BM_DenseScore)->Arg(100)->Arg(1000);

void BM_FuseAndRank(benchmark::State& state) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ScoredChunk> exact, semantic;
  for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(state.range(0)); ++i) {
    exact.push_back({ChunkId{i}, u(rng), u(rng)});
    semantic.push_back({ChunkId{i + 7}, u(rng), u(rng)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(fuse_and_rank(exact, semantic, FusionWeights(3, 2), 0.1, 5));
}
BENCHMARK(BM_FuseAndRank)->Arg(20)->Arg(200);

void BM_CatalogRetrieve(benchmark::State& state) {
  Stack s(synthetic_corpus(500, 400));
  RetrievalRequest req{150, 5, FusionWeights(3, 2), 0.1, 20};
  s.catalog->at(150);
  for (auto _ : state) benchmark::DoNotOptimize(s.catalog->retrieve("vault archive copper meadow", req));
}
BENCHMARK(BM_CatalogRetrieve);

void BM_EngineQuery(benchmark::State& state) {
  auto mode = static_cast<EngineMode>(state.range(0));
  std::istringstream script(R"({"default": "copper"})");
  EngineParts parts;
  parts.corpus = synthetic_corpus(200, 400);
  parts.chat = ScriptedBackend::from_stream(script, make_tokenizer("ws-punct-v1"));
  Engine engine(EngineConfig{}, parts);
  engine.build_indexes();
  for (auto _ : state) benchmark::DoNotOptimize(engine.answer("Which vault is near the copper meadow?", {mode, std::nullopt}));
  state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_EngineQuery)->Arg(static_cast<int>(EngineMode::kOkra))->Arg(static_cast<int>(EngineMode::kStdRag))->Arg(static_cast<int>(EngineMode::kLongContext));

}  // namespace

BENCHMARK_MAIN();

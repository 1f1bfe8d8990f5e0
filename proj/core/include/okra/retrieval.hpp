#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "okra/corpus.hpp"
#include "okra/http.hpp"
#include "okra/tokenizer.hpp"

namespace okra {

struct ScoredChunk {
  ChunkId id{};
  double raw_score = 0.0;
  double normalized_score = 0.0;
};

// Non-negative, stored normalized to sum 1.
class FusionWeights {
 public:
  FusionWeights() : FusionWeights(1.0, 1.0) {}
  FusionWeights(double exact, double semantic);

  double exact() const noexcept { return exact_; }
  double semantic() const noexcept { return semantic_; }

  friend bool operator==(const FusionWeights&, const FusionWeights&) = default;

 private:
  double exact_;
  double semantic_;
};

struct RankedEntry {
  ChunkId id{};
  double exact = 0.0;     // normalized exact-side score, 0 when absent
  double semantic = 0.0;  // normalized semantic-side score, 0 when absent
  double fused = 0.0;
};

struct RankedContext {
  std::vector<RankedEntry> entries;  // fused descending, ties by lower chunk id
  FusionWeights weights;
  double threshold = 0.0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Inverted index over the lexical terms of every chunk.
class SparseIndex {
 public:
  SparseIndex() = default;
  SparseIndex(const ChunkIndex& index, std::shared_ptr<const Tokenizer> tokenizer, Bm25Params params = {});

  // Chunks with a positive BM25 score, best first, at most `limit`.
  std::vector<ScoredChunk> score(std::string_view query, std::size_t limit) const;

  std::size_t num_chunks() const noexcept { return lengths_.size(); }
  double average_length() const noexcept { return avg_length_; }

 private:
  struct Posting {
    std::uint32_t chunk;
    std::uint32_t tf;
  };

  std::shared_ptr<const Tokenizer> tokenizer_;
  Bm25Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> lengths_;
  double avg_length_ = 0.0;
};

SparseIndex build_sparse_index(const ChunkIndex& index, std::shared_ptr<const Tokenizer> tokenizer,
                               Bm25Params params = {});
std::vector<ScoredChunk> score_sparse(const SparseIndex& handle, std::string_view query, std::size_t limit);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  // One vector of dimension() per input. Must tolerate concurrent calls.
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) const = 0;
};

// Signed feature hashing of lowercased lexical terms. Deterministic for a
// given (dimension, seed).
class HashingEmbedder final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 256;
  static constexpr std::uint64_t kDefaultSeed = 0x6f6b7261ULL;

  explicit HashingEmbedder(std::shared_ptr<const Tokenizer> tokenizer, std::size_t dimension = kDefaultDimension,
                           std::uint64_t seed = kDefaultSeed);

  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::size_t dimension_;
  std::uint64_t seed_;
};

// OpenAI-compatible embeddings endpoint: POST {"input": [...], "model": m},
// reads data[i].embedding.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  RemoteEmbedder(std::shared_ptr<HttpTransport> transport, std::string endpoint, std::string model,
                 std::size_t dimension, std::size_t batch_size = 64);

  std::string id() const override { return "remote:" + model_; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string endpoint_;
  std::string model_;
  std::size_t dimension_;
  std::size_t batch_size_;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Chunk vectors of one ChunkIndex.
class DenseIndex {
 public:
  DenseIndex() = default;
  // Throws RetrievalError if the provider fails.
  DenseIndex(const ChunkIndex& index, const EmbeddingProvider& provider);
  DenseIndex(std::string provider_id, std::size_t dimension, std::vector<float> flat_vectors);

  const std::string& provider_id() const noexcept { return provider_id_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return dimension_ == 0 ? 0 : vectors_.size() / dimension_; }
  std::span<const float> vector(std::size_t position) const {
    return std::span<const float>(vectors_).subspan(position * dimension_, dimension_);
  }
  std::span<const float> flat() const noexcept { return vectors_; }

  std::vector<ScoredChunk> score(std::span<const float> query_vector, std::size_t limit) const;

 private:
  std::string provider_id_;
  std::size_t dimension_ = 0;
  std::vector<float> vectors_;
};

// Top `limit` chunks by cosine similarity to the embedded query. Zero vectors
// have similarity 0 with everything.
std::vector<ScoredChunk> score_semantic(const EmbeddingProvider& provider, const DenseIndex& dense,
                                        std::string_view query, std::size_t limit);

// (raw - min) / (max - min); an all-equal or single-element input maps to 1.
std::vector<ScoredChunk> minmax_normalize(std::vector<ScoredChunk> scores);

// Weighted sum of the normalized scores over the union of both inputs, a side
// missing a chunk contributing 0. Entries below threshold * top-1 are dropped,
// then the ranking is truncated to `limit`.
RankedContext fuse_and_rank(std::span<const ScoredChunk> exact, std::span<const ScoredChunk> semantic,
                            const FusionWeights& weights, double threshold, std::size_t limit);

struct RetrievalRequest {
  std::size_t granularity = 150;
  std::size_t top_k = 5;
  FusionWeights weights;
  double threshold = 0.1;
  std::size_t fusion_pool = 20;
};

struct GranularityIndex {
  std::shared_ptr<const ChunkIndex> chunks;
  SparseIndex sparse;
  DenseIndex dense;
};

// Lazily built sparse and dense retrievers per granularity over a CorpusStore.
// Thread-safe; each granularity is built once.
class IndexCatalog {
 public:
  IndexCatalog(std::shared_ptr<CorpusStore> store, std::shared_ptr<const EmbeddingProvider> embedder,
               Bm25Params bm25 = {});

  CorpusStore& store() noexcept { return *store_; }
  const Corpus& corpus() const noexcept { return store_->corpus(); }
  const Tokenizer& tokenizer() const noexcept { return store_->tokenizer(); }
  const EmbeddingProvider& embedder() const noexcept { return *embedder_; }

  std::shared_ptr<const GranularityIndex> at(std::size_t granularity);
  bool has(std::size_t granularity) const;
  std::size_t retriever_builds() const;

  // Fused hybrid retrieval.
  RankedContext retrieve(std::string_view query, const RetrievalRequest& request);
  // Dense-only top-k, for the long-context fallback.
  std::vector<ScoredChunk> retrieve_semantic(std::string_view query, std::size_t granularity, std::size_t limit);

  // Persists the corpus store plus `dense-<g>.f32` embedding tables.
  void persist(const std::filesystem::path& dir);
  // Reuses persisted embeddings when they were produced by the same provider.
  void load_dense(const std::filesystem::path& dir);

 private:
  std::shared_ptr<CorpusStore> store_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  Bm25Params bm25_;
  mutable std::mutex mutex_;
  std::map<std::size_t, std::shared_ptr<const GranularityIndex>> built_;
  std::map<std::size_t, DenseIndex> preloaded_dense_;
  std::size_t builds_ = 0;
};

}  // namespace okra

#include "okra/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "okra/errors.hpp"

namespace okra {

using nlohmann::json;

namespace {

bool ranks_before(const ScoredChunk& a, const ScoredChunk& b) {
  if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
  return a.id < b.id;
}

void keep_top(std::vector<ScoredChunk>& scores, std::size_t limit) {
  if (scores.size() > limit) {
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(limit), scores.end(), ranks_before);
    scores.resize(limit);
  } else {
    std::sort(scores.begin(), scores.end(), ranks_before);
  }
}

std::uint64_t seeded_hash(std::uint64_t seed, std::string_view term) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xff;
    h *= 1099511628211ULL;
  }
  for (unsigned char c : term) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // Final avalanche (splitmix64 tail) so low bits are usable as a bucket.
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::string dense_table_name(std::size_t granularity) { return "dense-" + std::to_string(granularity) + ".f32"; }

constexpr char kDenseMagic[4] = {'O', 'K', 'D', 'V'};

}  // namespace

FusionWeights::FusionWeights(double exact, double semantic) {
  if (!(exact >= 0.0) || !(semantic >= 0.0)) throw RetrievalError("fusion weights must be non-negative");
  double total = exact + semantic;
  if (!(total > 0.0) || !std::isfinite(total)) throw RetrievalError("fusion weights must have a positive sum");
  exact_ = exact / total;
  semantic_ = semantic / total;
}

SparseIndex::SparseIndex(const ChunkIndex& index, std::shared_ptr<const Tokenizer> tokenizer, Bm25Params params)
    : tokenizer_(std::move(tokenizer)), params_(params) {
  lengths_.reserve(index.size());
  std::uint64_t total = 0;
  for (const auto& chunk : index.chunks()) {
    auto terms = lexical_terms(*tokenizer_, chunk.text);
    std::unordered_map<std::string, std::uint32_t> tf;
    for (auto& t : terms) ++tf[std::move(t)];
    auto pos = to_underlying(chunk.id);
    for (auto& [term, count] : tf) postings_[term].push_back({pos, count});
    lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    total += terms.size();
  }
  avg_length_ = lengths_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(lengths_.size());
}

std::vector<ScoredChunk> SparseIndex::score(std::string_view query, std::size_t limit) const {
  if (limit == 0) throw RetrievalError("limit must be >= 1");
  if (lengths_.empty() || !tokenizer_) return {};

  auto terms = lexical_terms(*tokenizer_, query);
  std::unordered_set<std::string> unique(terms.begin(), terms.end());

  const double n = static_cast<double>(lengths_.size());
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& term : unique) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const auto& p : it->second) {
      const double tf = p.tf;
      const double norm = avg_length_ > 0.0 ? lengths_[p.chunk] / avg_length_ : 0.0;
      acc[p.chunk] += idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * (1.0 - params_.b + params_.b * norm));
    }
  }

  std::vector<ScoredChunk> out;
  out.reserve(acc.size());
  for (const auto& [chunk, s] : acc) {
    if (s > 0.0) out.push_back({ChunkId{chunk}, s, 0.0});
  }
  keep_top(out, limit);
  return out;
}

SparseIndex build_sparse_index(const ChunkIndex& index, std::shared_ptr<const Tokenizer> tokenizer, Bm25Params params) {
  return SparseIndex(index, std::move(tokenizer), params);
}

std::vector<ScoredChunk> score_sparse(const SparseIndex& handle, std::string_view query, std::size_t limit) {
  return handle.score(query, limit);
}

HashingEmbedder::HashingEmbedder(std::shared_ptr<const Tokenizer> tokenizer, std::size_t dimension, std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ConfigError("embedding dimension must be >= 1");
}

std::string HashingEmbedder::id() const {
  return "hashing:" + std::to_string(dimension_) + ":" + std::to_string(seed_) + ":" + tokenizer_->id();
}

std::vector<std::vector<float>> HashingEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<float> v(dimension_, 0.0F);
    for (const auto& term : lexical_terms(*tokenizer_, text)) {
      auto h = seeded_hash(seed_, term);
      v[h % dimension_] += (h >> 63) != 0 ? -1.0F : 1.0F;
    }
    out.push_back(std::move(v));
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(std::shared_ptr<HttpTransport> transport, std::string endpoint, std::string model,
                               std::size_t dimension, std::size_t batch_size)
    : transport_(std::move(transport)),
      endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      dimension_(dimension),
      batch_size_(std::max<std::size_t>(1, batch_size)) {}

std::vector<std::vector<float>> RemoteEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    auto batch = texts.subspan(start, std::min(batch_size_, texts.size() - start));
    json body{{"input", json(std::vector<std::string>(batch.begin(), batch.end()))}, {"model", model_}};
    auto res = transport_->post_json(endpoint_, body.dump(), bearer_from_env());
    if (res.status < 200 || res.status >= 300) {
      throw RetrievalError("embedding endpoint returned HTTP " + std::to_string(res.status));
    }
    try {
      auto j = json::parse(res.body);
      const auto& data = j.at("data");
      if (data.size() != batch.size()) throw RetrievalError("embedding response has wrong number of vectors");
      for (const auto& item : data) {
        auto v = item.at("embedding").get<std::vector<float>>();
        if (v.size() != dimension_) {
          throw RetrievalError("embedding dimension " + std::to_string(v.size()) + " != configured " +
                               std::to_string(dimension_));
        }
        out.push_back(std::move(v));
      }
    } catch (const json::exception& e) {
      throw RetrievalError(std::string("malformed embedding response: ") + e.what());
    }
  }
  return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

DenseIndex::DenseIndex(const ChunkIndex& index, const EmbeddingProvider& provider)
    : provider_id_(provider.id()), dimension_(provider.dimension()) {
  std::vector<std::string> texts;
  texts.reserve(index.size());
  for (const auto& c : index.chunks()) texts.push_back(c.text);
  std::vector<std::vector<float>> vecs;
  try {
    vecs = provider.embed(texts);
  } catch (const RetrievalError&) {
    throw;
  } catch (const std::exception& e) {
    throw RetrievalError(std::string("embedding provider failed: ") + e.what());
  }
  if (vecs.size() != texts.size()) throw RetrievalError("embedding provider returned wrong number of vectors");
  vectors_.reserve(vecs.size() * dimension_);
  for (const auto& v : vecs) {
    if (v.size() != dimension_) throw RetrievalError("embedding provider returned wrong dimension");
    vectors_.insert(vectors_.end(), v.begin(), v.end());
  }
}

DenseIndex::DenseIndex(std::string provider_id, std::size_t dimension, std::vector<float> flat_vectors)
    : provider_id_(std::move(provider_id)), dimension_(dimension), vectors_(std::move(flat_vectors)) {
  if (dimension_ == 0 || vectors_.size() % dimension_ != 0) throw IndexError("dense table size mismatch");
}

std::vector<ScoredChunk> DenseIndex::score(std::span<const float> query_vector, std::size_t limit) const {
  if (limit == 0) throw RetrievalError("limit must be >= 1");
  std::vector<ScoredChunk> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    out.push_back({ChunkId{static_cast<std::uint32_t>(i)}, cosine_similarity(query_vector, vector(i)), 0.0});
  }
  keep_top(out, limit);
  return out;
}

std::vector<ScoredChunk> score_semantic(const EmbeddingProvider& provider, const DenseIndex& dense,
                                        std::string_view query, std::size_t limit) {
  if (dense.size() == 0) return {};
  std::vector<std::vector<float>> q;
  try {
    std::string text(query);
    q = provider.embed(std::span<const std::string>(&text, 1));
  } catch (const RetrievalError&) {
    throw;
  } catch (const std::exception& e) {
    throw RetrievalError(std::string("embedding provider failed: ") + e.what());
  }
  if (q.size() != 1) throw RetrievalError("embedding provider returned no query vector");
  return dense.score(q.front(), limit);
}

std::vector<ScoredChunk> minmax_normalize(std::vector<ScoredChunk> scores) {
  if (scores.empty()) return scores;
  auto [lo, hi] = std::minmax_element(scores.begin(), scores.end(),
                                      [](const auto& a, const auto& b) { return a.raw_score < b.raw_score; });
  const double min = lo->raw_score;
  const double range = hi->raw_score - min;
  for (auto& s : scores) s.normalized_score = range > 0.0 ? (s.raw_score - min) / range : 1.0;
  return scores;
}

RankedContext fuse_and_rank(std::span<const ScoredChunk> exact, std::span<const ScoredChunk> semantic,
                            const FusionWeights& weights, double threshold, std::size_t limit) {
  if (!(threshold >= 0.0 && threshold < 1.0)) throw RetrievalError("threshold must be in [0, 1)");
  RankedContext ctx;
  ctx.weights = weights;
  ctx.threshold = threshold;

  std::unordered_map<std::uint32_t, RankedEntry> merged;
  for (const auto& s : exact) {
    auto& e = merged[to_underlying(s.id)];
    e.id = s.id;
    e.exact = s.normalized_score;
  }
  for (const auto& s : semantic) {
    auto& e = merged[to_underlying(s.id)];
    e.id = s.id;
    e.semantic = s.normalized_score;
  }
  ctx.entries.reserve(merged.size());
  for (auto& [_, e] : merged) {
    e.fused = weights.exact() * e.exact + weights.semantic() * e.semantic;
    ctx.entries.push_back(e);
  }
  std::sort(ctx.entries.begin(), ctx.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.fused != b.fused) return a.fused > b.fused;
    return a.id < b.id;
  });
  if (!ctx.entries.empty()) {
    const double cutoff = threshold * ctx.entries.front().fused;
    std::erase_if(ctx.entries, [cutoff](const RankedEntry& e) { return e.fused < cutoff; });
  }
  if (ctx.entries.size() > limit) ctx.entries.resize(limit);
  return ctx;
}

IndexCatalog::IndexCatalog(std::shared_ptr<CorpusStore> store, std::shared_ptr<const EmbeddingProvider> embedder,
                           Bm25Params bm25)
    : store_(std::move(store)), embedder_(std::move(embedder)), bm25_(bm25) {}

std::shared_ptr<const GranularityIndex> IndexCatalog::at(std::size_t granularity) {
  std::lock_guard lock(mutex_);
  if (auto it = built_.find(granularity); it != built_.end()) return it->second;

  auto gi = std::make_shared<GranularityIndex>();
  gi->chunks = store_->rescale_index(granularity);
  gi->sparse = SparseIndex(*gi->chunks, store_->shared_tokenizer(), bm25_);
  auto pre = preloaded_dense_.find(granularity);
  if (pre != preloaded_dense_.end() && pre->second.provider_id() == embedder_->id() &&
      pre->second.size() == gi->chunks->size()) {
    gi->dense = std::move(pre->second);
  } else {
    gi->dense = DenseIndex(*gi->chunks, *embedder_);
  }
  if (pre != preloaded_dense_.end()) preloaded_dense_.erase(pre);
  ++builds_;
  built_.emplace(granularity, gi);
  return gi;
}

bool IndexCatalog::has(std::size_t granularity) const {
  std::lock_guard lock(mutex_);
  return built_.contains(granularity);
}

std::size_t IndexCatalog::retriever_builds() const {
  std::lock_guard lock(mutex_);
  return builds_;
}

RankedContext IndexCatalog::retrieve(std::string_view query, const RetrievalRequest& request) {
  if (request.top_k == 0) throw RetrievalError("top_k must be >= 1");
  auto gi = at(request.granularity);
  auto pool = std::max<std::size_t>(1, request.fusion_pool);
  auto exact = minmax_normalize(gi->sparse.score(query, pool));
  auto semantic = minmax_normalize(score_semantic(*embedder_, gi->dense, query, pool));
  return fuse_and_rank(exact, semantic, request.weights, request.threshold, request.top_k);
}

std::vector<ScoredChunk> IndexCatalog::retrieve_semantic(std::string_view query, std::size_t granularity,
                                                         std::size_t limit) {
  auto gi = at(granularity);
  return score_semantic(*embedder_, gi->dense, query, limit);
}

void IndexCatalog::persist(const std::filesystem::path& dir) {
  store_->persist(dir);
  std::lock_guard lock(mutex_);
  for (const auto& [g, gi] : built_) {
    std::ofstream out(dir / dense_table_name(g), std::ios::binary | std::ios::trunc);
    const auto& id = gi->dense.provider_id();
    auto id_len = static_cast<std::uint32_t>(id.size());
    auto dim = static_cast<std::uint32_t>(gi->dense.dimension());
    auto count = static_cast<std::uint64_t>(gi->dense.size());
    out.write(kDenseMagic, 4);
    out.write(reinterpret_cast<const char*>(&id_len), sizeof id_len);
    out.write(id.data(), id_len);
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    auto flat = gi->dense.flat();
    out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size_bytes()));
    if (!out) throw IndexError("failed writing dense table for granularity " + std::to_string(g));
  }
}

void IndexCatalog::load_dense(const std::filesystem::path& dir) {
  std::lock_guard lock(mutex_);
  for (std::size_t g : store_->granularities()) {
    std::ifstream in(dir / dense_table_name(g), std::ios::binary);
    if (!in) continue;
    char magic[4];
    std::uint32_t id_len = 0;
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&id_len), sizeof id_len);
    if (!in || std::memcmp(magic, kDenseMagic, 4) != 0 || id_len > 4096) continue;
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    in.read(reinterpret_cast<char*>(&dim), sizeof dim);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in || dim == 0) continue;
    std::vector<float> flat(static_cast<std::size_t>(count) * dim);
    in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(float)));
    if (!in) continue;
    preloaded_dense_.insert_or_assign(g, DenseIndex(std::move(id), dim, std::move(flat)));
  }
}

}  // namespace okra

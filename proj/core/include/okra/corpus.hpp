#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "okra/tokenizer.hpp"

namespace okra {

struct Document {
  std::string id;
  std::string text;
  std::string source;

  friend bool operator==(const Document&, const Document&) = default;
};

// Ordered, id-unique document collection.
class Corpus {
 public:
  Corpus() = default;
  // Throws IngestError on a duplicate id.
  explicit Corpus(std::vector<Document> documents);

  std::span<const Document> documents() const noexcept { return documents_; }
  std::size_t size() const noexcept { return documents_.size(); }
  bool empty() const noexcept { return documents_.empty(); }

  const Document& at(std::size_t position) const { return documents_.at(position); }
  std::optional<std::size_t> position_of(std::string_view doc_id) const;

  // FNV-1a over ids and texts; detects a changed corpus against a persisted index.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> positions_;
};

enum class CorpusFormat { kJsonLines };

CorpusFormat parse_corpus_format(std::string_view name);

// One JSON object per line with fields `id` (optional), `text` (required) and
// `source` (optional). Blank lines are skipped. Records without an explicit id
// get their 0-based record position as id.
Corpus ingest_corpus(const std::filesystem::path& source, CorpusFormat format = CorpusFormat::kJsonLines);
Corpus ingest_corpus(std::istream& in, CorpusFormat format = CorpusFormat::kJsonLines);

enum class ChunkId : std::uint32_t {};

constexpr std::uint32_t to_underlying(ChunkId id) noexcept { return static_cast<std::uint32_t>(id); }

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct Chunk {
  ChunkId id{};
  std::string doc_id;
  std::size_t doc_position = 0;  // position of the parent in its Corpus
  std::size_t ordinal = 0;
  TokenSpan token_span;
  CharSpan char_span;
  std::string text;
  std::size_t granularity = 0;

  std::size_t token_count() const noexcept { return token_span.size(); }
};

// Cuts a document into consecutive chunks of at most `granularity` tokens.
// Chunk boundaries sit at token starts; whitespace between two tokens belongs
// to the earlier chunk, so the chunk texts concatenate back to the document.
// A document with text but no tokens yields one zero-token chunk.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t granularity, const Tokenizer& tokenizer,
                                  std::size_t doc_position = 0, ChunkId first_id = ChunkId{0});

// All chunks of a corpus at one granularity. Immutable once built. Chunk ids
// are dense positions, assigned in (document, ordinal) order.
class ChunkIndex {
 public:
  ChunkIndex(std::size_t granularity, std::vector<Chunk> chunks);

  std::size_t granularity() const noexcept { return granularity_; }
  std::span<const Chunk> chunks() const noexcept { return chunks_; }
  std::size_t size() const noexcept { return chunks_.size(); }
  bool empty() const noexcept { return chunks_.empty(); }

  bool contains(ChunkId id) const noexcept { return to_underlying(id) < chunks_.size(); }
  const Chunk& chunk(ChunkId id) const;

  // Chunks of one document in ordinal order; empty when the document has none.
  std::span<const Chunk> document_chunks(std::string_view doc_id) const;

  // Up to 2*radius+1 chunks of the same document centred on `id`, clipped at
  // the document boundaries. Throws IndexError if `id` is not in this index.
  std::span<const Chunk> neighbors(ChunkId id, std::size_t radius) const;

 private:
  struct Range {
    std::size_t first = 0;
    std::size_t last = 0;  // exclusive
  };

  std::size_t granularity_;
  std::vector<Chunk> chunks_;
  std::unordered_map<std::string, Range> doc_lookup_;
};

std::span<const Chunk> get_neighbors(const ChunkIndex& index, ChunkId id, std::size_t radius);

ChunkIndex build_chunk_index(const Corpus& corpus, std::size_t granularity, const Tokenizer& tokenizer);

// Owns the per-granularity indexes of one corpus. rescale_index builds a
// granularity at most once; concurrent callers for a missing granularity
// observe a single build.
class CorpusStore {
 public:
  CorpusStore(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const Tokenizer> tokenizer);

  const Corpus& corpus() const noexcept { return *corpus_; }
  std::shared_ptr<const Corpus> shared_corpus() const noexcept { return corpus_; }
  const Tokenizer& tokenizer() const noexcept { return *tokenizer_; }
  std::shared_ptr<const Tokenizer> shared_tokenizer() const noexcept { return tokenizer_; }

  std::shared_ptr<const ChunkIndex> rescale_index(std::size_t granularity);
  std::shared_ptr<const ChunkIndex> find(std::size_t granularity) const;

  std::vector<std::size_t> granularities() const;
  std::size_t build_count() const;

  // Directory layout: `manifest` (JSON: tokenizer id, granularities, corpus
  // fingerprint), `documents.jsonl`, and `chunks-<granularity>.jsonl` rows of
  // [chunk_id, doc_id, ordinal, char_start, char_end, token_start, token_end].
  void persist(const std::filesystem::path& dir) const;

  // Throws IndexError when the directory is unreadable or was written with a
  // different tokenizer.
  static std::unique_ptr<CorpusStore> open(const std::filesystem::path& dir,
                                           std::shared_ptr<const Tokenizer> tokenizer);

 private:
  std::shared_ptr<const Corpus> corpus_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  mutable std::mutex mutex_;
  std::map<std::size_t, std::shared_ptr<const ChunkIndex>> indexes_;
  std::size_t builds_ = 0;
};

struct IndexManifest {
  std::string tokenizer;
  std::vector<std::size_t> granularities;
  std::uint64_t fingerprint = 0;
};

// Returns nullopt when `dir` holds no manifest.
std::optional<IndexManifest> read_manifest(const std::filesystem::path& dir);

}  // namespace okra

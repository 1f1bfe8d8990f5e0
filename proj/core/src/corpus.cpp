#include "okra/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "okra/errors.hpp"

namespace okra {

using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  // Separator so ("ab","c") and ("a","bc") differ.
  h ^= 0xff;
  h *= kFnvPrime;
}

std::string chunk_table_name(std::size_t granularity) {
  return "chunks-" + std::to_string(granularity) + ".jsonl";
}

}  // namespace

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  positions_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    if (!positions_.emplace(documents_[i].id, i).second) {
      throw IngestError("duplicate doc_id '" + documents_[i].id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::position_of(std::string_view doc_id) const {
  auto it = positions_.find(std::string(doc_id));
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Corpus::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& doc : documents_) {
    fnv_mix(h, doc.id);
    fnv_mix(h, doc.text);
  }
  return h;
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl" || name == "ndjson" || name == "json-lines") return CorpusFormat::kJsonLines;
  throw ConfigError("unknown corpus format: " + std::string(name));
}

Corpus ingest_corpus(const std::filesystem::path& source, CorpusFormat format) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw IngestError("cannot read corpus file " + source.string());
  return ingest_corpus(in, format);
}

Corpus ingest_corpus(std::istream& in, CorpusFormat /*format*/) {
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw IngestError("malformed record: not an object", line_no);

    auto text = record.find("text");
    if (text == record.end() || !text->is_string()) {
      throw IngestError("malformed record: missing string field 'text'", line_no);
    }
    Document doc;
    doc.text = text->get<std::string>();
    if (auto id = record.find("id"); id != record.end() && !id->is_null()) {
      if (!id->is_string()) throw IngestError("malformed record: 'id' must be a string", line_no);
      doc.id = id->get<std::string>();
    } else {
      doc.id = std::to_string(docs.size());
    }
    if (auto src = record.find("source"); src != record.end() && !src->is_null()) {
      if (!src->is_string()) throw IngestError("malformed record: 'source' must be a string", line_no);
      doc.source = src->get<std::string>();
    }
    if (!seen.emplace(doc.id, line_no).second) {
      throw IngestError("duplicate doc_id '" + doc.id + "'", line_no);
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

std::vector<Chunk> chunk_document(const Document& doc, std::size_t granularity, const Tokenizer& tokenizer,
                                  std::size_t doc_position, ChunkId first_id) {
  if (granularity == 0) throw IndexError("granularity must be >= 1");
  std::vector<Chunk> chunks;
  if (doc.text.empty()) return chunks;

  auto tokens = tokenizer.tokenize(doc.text);
  auto make = [&](std::size_t ordinal, TokenSpan tokens_span, CharSpan chars) {
    Chunk c;
    c.id = ChunkId{to_underlying(first_id) + static_cast<std::uint32_t>(ordinal)};
    c.doc_id = doc.id;
    c.doc_position = doc_position;
    c.ordinal = ordinal;
    c.token_span = tokens_span;
    c.char_span = chars;
    c.text = doc.text.substr(chars.begin, chars.size());
    c.granularity = granularity;
    return c;
  };

  if (tokens.empty()) {
    chunks.push_back(make(0, {0, 0}, {0, doc.text.size()}));
    return chunks;
  }

  std::size_t n_chunks = (tokens.size() + granularity - 1) / granularity;
  chunks.reserve(n_chunks);
  for (std::size_t k = 0; k < n_chunks; ++k) {
    std::size_t tok_begin = k * granularity;
    std::size_t tok_end = std::min(tokens.size(), tok_begin + granularity);
    std::size_t char_begin = k == 0 ? 0 : tokens[tok_begin].begin;
    std::size_t char_end = tok_end == tokens.size() ? doc.text.size() : tokens[tok_end].begin;
    chunks.push_back(make(k, {tok_begin, tok_end}, {char_begin, char_end}));
  }
  return chunks;
}

ChunkIndex::ChunkIndex(std::size_t granularity, std::vector<Chunk> chunks)
    : granularity_(granularity), chunks_(std::move(chunks)) {
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    if (to_underlying(chunks_[i].id) != i) throw IndexError("chunk ids must be dense positions");
    auto [it, inserted] = doc_lookup_.try_emplace(chunks_[i].doc_id, Range{i, i + 1});
    if (!inserted) {
      if (it->second.last != i) throw IndexError("chunks of document '" + chunks_[i].doc_id + "' are not contiguous");
      it->second.last = i + 1;
    }
  }
}

const Chunk& ChunkIndex::chunk(ChunkId id) const {
  if (!contains(id)) throw IndexError("chunk " + std::to_string(to_underlying(id)) + " not in index");
  return chunks_[to_underlying(id)];
}

std::span<const Chunk> ChunkIndex::document_chunks(std::string_view doc_id) const {
  auto it = doc_lookup_.find(std::string(doc_id));
  if (it == doc_lookup_.end()) return {};
  return std::span<const Chunk>(chunks_).subspan(it->second.first, it->second.last - it->second.first);
}

std::span<const Chunk> ChunkIndex::neighbors(ChunkId id, std::size_t radius) const {
  const Chunk& center = chunk(id);
  auto range = doc_lookup_.at(center.doc_id);
  std::size_t pos = to_underlying(id);
  std::size_t first = pos - std::min(radius, pos - range.first);
  std::size_t last = pos + 1 + std::min(radius, range.last - pos - 1);
  return std::span<const Chunk>(chunks_).subspan(first, last - first);
}

std::span<const Chunk> get_neighbors(const ChunkIndex& index, ChunkId id, std::size_t radius) {
  return index.neighbors(id, radius);
}

ChunkIndex build_chunk_index(const Corpus& corpus, std::size_t granularity, const Tokenizer& tokenizer) {
  std::vector<Chunk> all;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    auto chunks = chunk_document(corpus.at(d), granularity, tokenizer, d,
                                 ChunkId{static_cast<std::uint32_t>(all.size())});
    std::move(chunks.begin(), chunks.end(), std::back_inserter(all));
  }
  return ChunkIndex(granularity, std::move(all));
}

CorpusStore::CorpusStore(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const Tokenizer> tokenizer)
    : corpus_(std::move(corpus)), tokenizer_(std::move(tokenizer)) {}

std::shared_ptr<const ChunkIndex> CorpusStore::rescale_index(std::size_t granularity) {
  if (granularity == 0) throw IndexError("granularity must be >= 1");
  std::lock_guard lock(mutex_);
  if (auto it = indexes_.find(granularity); it != indexes_.end()) return it->second;
  auto index = std::make_shared<const ChunkIndex>(build_chunk_index(*corpus_, granularity, *tokenizer_));
  ++builds_;
  indexes_.emplace(granularity, index);
  return index;
}

std::shared_ptr<const ChunkIndex> CorpusStore::find(std::size_t granularity) const {
  std::lock_guard lock(mutex_);
  auto it = indexes_.find(granularity);
  return it == indexes_.end() ? nullptr : it->second;
}

std::vector<std::size_t> CorpusStore::granularities() const {
  std::lock_guard lock(mutex_);
  std::vector<std::size_t> out;
  for (const auto& [g, _] : indexes_) out.push_back(g);
  return out;
}

std::size_t CorpusStore::build_count() const {
  std::lock_guard lock(mutex_);
  return builds_;
}

void CorpusStore::persist(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::lock_guard lock(mutex_);

  {
    std::ofstream out(dir / "documents.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& doc : corpus_->documents()) {
      out << json{{"id", doc.id}, {"text", doc.text}, {"source", doc.source}}.dump() << '\n';
    }
    if (!out) throw IndexError("failed writing " + (dir / "documents.jsonl").string());
  }

  json granularities = json::array();
  for (const auto& [g, index] : indexes_) {
    granularities.push_back(g);
    std::ofstream out(dir / chunk_table_name(g), std::ios::binary | std::ios::trunc);
    for (const auto& c : index->chunks()) {
      out << json::array({to_underlying(c.id), c.doc_id, c.ordinal, c.char_span.begin, c.char_span.end,
                          c.token_span.begin, c.token_span.end})
                 .dump()
          << '\n';
    }
    if (!out) throw IndexError("failed writing chunk table for granularity " + std::to_string(g));
  }

  json manifest{{"format", 1},
                {"tokenizer", tokenizer_->id()},
                {"granularities", granularities},
                {"fingerprint", corpus_->fingerprint()}};
  std::ofstream out(dir / "manifest", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw IndexError("failed writing manifest in " + dir.string());
}

std::optional<IndexManifest> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest");
  if (!in) return std::nullopt;
  try {
    auto j = json::parse(in);
    IndexManifest m;
    m.tokenizer = j.at("tokenizer").get<std::string>();
    m.granularities = j.at("granularities").get<std::vector<std::size_t>>();
    m.fingerprint = j.at("fingerprint").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw IndexError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
}

std::unique_ptr<CorpusStore> CorpusStore::open(const std::filesystem::path& dir,
                                               std::shared_ptr<const Tokenizer> tokenizer) {
  auto manifest = read_manifest(dir);
  if (!manifest) throw IndexError("no index manifest in " + dir.string());
  if (manifest->tokenizer != tokenizer->id()) {
    throw IndexError("index in " + dir.string() + " was built with tokenizer '" + manifest->tokenizer +
                     "', active tokenizer is '" + tokenizer->id() + "'");
  }

  std::shared_ptr<const Corpus> corpus;
  try {
    corpus = std::make_shared<const Corpus>(ingest_corpus(dir / "documents.jsonl"));
  } catch (const IngestError& e) {
    throw IndexError(std::string("cannot reload documents: ") + e.what());
  }
  auto store = std::make_unique<CorpusStore>(corpus, std::move(tokenizer));

  for (std::size_t g : manifest->granularities) {
    std::ifstream in(dir / chunk_table_name(g), std::ios::binary);
    if (!in) throw IndexError("missing chunk table for granularity " + std::to_string(g));
    std::vector<Chunk> chunks;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto row = json::parse(line);
        Chunk c;
        c.id = ChunkId{row.at(0).get<std::uint32_t>()};
        c.doc_id = row.at(1).get<std::string>();
        c.ordinal = row.at(2).get<std::size_t>();
        c.char_span = {row.at(3).get<std::size_t>(), row.at(4).get<std::size_t>()};
        c.token_span = {row.at(5).get<std::size_t>(), row.at(6).get<std::size_t>()};
        c.granularity = g;
        auto pos = corpus->position_of(c.doc_id);
        if (!pos) throw IndexError("chunk table references unknown doc_id '" + c.doc_id + "'");
        const auto& text = corpus->at(*pos).text;
        if (c.char_span.end > text.size() || c.char_span.begin > c.char_span.end) {
          throw IndexError("chunk span out of range for doc_id '" + c.doc_id + "'");
        }
        c.doc_position = *pos;
        c.text = text.substr(c.char_span.begin, c.char_span.size());
        chunks.push_back(std::move(c));
      } catch (const json::exception& e) {
        throw IndexError("corrupt chunk table for granularity " + std::to_string(g) + ": " + e.what());
      }
    }
    store->indexes_.emplace(g, std::make_shared<const ChunkIndex>(g, std::move(chunks)));
  }
  return store;
}

}  // namespace okra

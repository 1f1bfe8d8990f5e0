#pragma once

#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "okra/corpus.hpp"
#include "okra/executor.hpp"
#include "okra/gateway.hpp"
#include "okra/retrieval.hpp"
#include "okra/tokenizer.hpp"

namespace fixtures {

inline std::shared_ptr<const okra::Tokenizer> tokenizer() { return okra::make_tokenizer("ws-punct-v1"); }

inline std::shared_ptr<const okra::Corpus> corpus(std::vector<std::pair<std::string, std::string>> docs) {
  std::vector<okra::Document> out;
  for (auto& [id, text] : docs) out.push_back({id, text, ""});
  return std::make_shared<const okra::Corpus>(std::move(out));
}

struct Stack {
  std::shared_ptr<const okra::Tokenizer> tok;
  std::shared_ptr<okra::CorpusStore> store;
  std::shared_ptr<const okra::EmbeddingProvider> embedder;
  std::unique_ptr<okra::IndexCatalog> catalog;
};

inline Stack stack(std::shared_ptr<const okra::Corpus> c) {
  Stack s;
  s.tok = tokenizer();
  s.store = std::make_shared<okra::CorpusStore>(std::move(c), s.tok);
  s.embedder = std::make_shared<okra::HashingEmbedder>(s.tok);
  s.catalog = std::make_unique<okra::IndexCatalog>(s.store, s.embedder);
  return s;
}

inline std::unique_ptr<okra::ScriptedBackend> script(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return okra::ScriptedBackend::from_stream(in, tokenizer());
}

// `n` space-separated words drawn from a small vocabulary.
inline std::string random_words(std::mt19937& rng, std::size_t n) {
  static const char* vocab[] = {"river", "campus", "acres", "film",  "director", "born",  "western", "actress",
                                "year",  "city",   "north", "south", "revenue",  "table", "growth",  "market"};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(vocab) - 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += vocab[pick(rng)];
  }
  return out;
}

}  // namespace fixtures

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace okra {

// Half-open byte range [begin, end) into a string.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return begin == end; }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

// Splits text into tokens. Every count in the engine (chunk granularity,
// prompt size, cost) is expressed in the units of the active tokenizer.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  // Stable identifier, recorded in index manifests.
  virtual std::string id() const = 0;

  // Byte spans of each token, in order and non-overlapping.
  virtual std::vector<CharSpan> tokenize(std::string_view text) const = 0;

  virtual std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

// Maximal runs of word bytes form one token; every ASCII punctuation byte is a
// token of its own; whitespace separates. Bytes >= 0x80 count as word bytes so
// UTF-8 sequences are never split.
class WhitespacePunctTokenizer final : public Tokenizer {
 public:
  static constexpr std::string_view kId = "ws-punct-v1";

  std::string id() const override { return std::string(kId); }
  std::vector<CharSpan> tokenize(std::string_view text) const override;
  std::size_t count(std::string_view text) const override;
};

std::shared_ptr<const Tokenizer> make_tokenizer(std::string_view id);

// Lowercased word tokens, punctuation dropped. Used for lexical matching.
std::vector<std::string> lexical_terms(const Tokenizer& tokenizer, std::string_view text);

}  // namespace okra

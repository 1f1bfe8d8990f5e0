#include "okra/tokenizer.hpp"

#include <algorithm>
#include <cctype>

#include "okra/errors.hpp"

namespace okra {
namespace {

enum class ByteClass { kSpace, kPunct, kWord };

ByteClass classify(unsigned char c) {
  if (c >= 0x80) return ByteClass::kWord;
  if (std::isspace(c)) return ByteClass::kSpace;
  if (std::ispunct(c)) return ByteClass::kPunct;
  return ByteClass::kWord;
}

template <typename Visit>
void scan(std::string_view text, Visit&& visit) {
  std::size_t i = 0;
  while (i < text.size()) {
    auto cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == ByteClass::kSpace) {
      ++i;
    } else if (cls == ByteClass::kPunct) {
      visit(i, i + 1);
      ++i;
    } else {
      std::size_t start = i;
      while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == ByteClass::kWord) ++i;
      visit(start, i);
    }
  }
}

}  // namespace

std::vector<CharSpan> WhitespacePunctTokenizer::tokenize(std::string_view text) const {
  std::vector<CharSpan> spans;
  scan(text, [&](std::size_t b, std::size_t e) { spans.push_back({b, e}); });
  return spans;
}

std::size_t WhitespacePunctTokenizer::count(std::string_view text) const {
  std::size_t n = 0;
  scan(text, [&](std::size_t, std::size_t) { ++n; });
  return n;
}

std::shared_ptr<const Tokenizer> make_tokenizer(std::string_view id) {
  if (id.empty() || id == WhitespacePunctTokenizer::kId) {
    return std::make_shared<WhitespacePunctTokenizer>();
  }
  throw ConfigError("unknown tokenizer: " + std::string(id));
}

std::vector<std::string> lexical_terms(const Tokenizer& tokenizer, std::string_view text) {
  std::vector<std::string> terms;
  for (const auto& span : tokenizer.tokenize(text)) {
    auto token = text.substr(span.begin, span.size());
    bool has_word = std::any_of(token.begin(), token.end(), [](char c) {
      auto u = static_cast<unsigned char>(c);
      return u >= 0x80 || std::isalnum(u);
    });
    if (!has_word) continue;
    std::string term(token);
    std::transform(term.begin(), term.end(), term.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    terms.push_back(std::move(term));
  }
  return terms;
}

}  // namespace okra

#include "okra/analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace okra {

using nlohmann::json;

const std::string_view kAnalysisSystemPrompt =
    "Given a question and the document context, please answer three questions:\n"
    "1. What type of question is being asked? The types include: extractive, abstractive, arithmetic, "
    "multi-bridge, and multi-source. Extractive means the query is directly factoid; abstractive means the "
    "query needs large context and refinement; arithemtic means the query needs numerical calculation; "
    "multi-bridge means the answer requires multiple bridging steps to get the answer;multi-source means the "
    "answer requires information from multiple facts (e.g. comparison questions).\n"
    "2. Is the key information of the question more exact or semantic (according to both the question and the "
    "context)? The answer should be \"exact\", \"semantic\" or \"same\".\n"
    "3. Does the provided context contain the enough information to answer the question? The answer should be "
    "either \"yes\" or \"no\".\n"
    "The final answer should be in the format of a dictionary:\n"
    "{\"question-type\": \"extractive\", \"info-type\": \"exact\", \"containing\": \"yes\"}.\n"
    "Please strictly follow the format and no explanation is needed.";

const std::string_view kStrictFormatReminder = "Please strictly follow the format.";

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string canonical_variant(std::string_view s) {
  std::string out = lower(s);
  auto b = out.find_first_not_of(" \t\r\n");
  auto e = out.find_last_not_of(" \t\r\n");
  out = b == std::string::npos ? std::string() : out.substr(b, e - b + 1);
  for (auto& c : out) {
    if (c == '_' || c == ' ') c = '-';
  }
  return out;
}

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",     "an",    "the",   "and",   "or",    "but",   "if",    "of",    "at",    "by",    "for",  "with",
      "about", "to",    "from",  "in",    "on",    "into",  "over",  "under", "is",    "are",   "was",  "were",
      "be",    "been",  "being", "am",    "do",    "does",  "did",   "have",  "has",   "had",   "what", "which",
      "who",   "whom",  "whose", "when",  "where", "why",   "how",   "this",  "that",  "these", "those", "it",
      "its",   "they",  "them",  "their", "he",    "him",   "his",   "she",   "her",   "we",    "our",  "you",
      "your",  "i",     "me",    "my",    "as",    "than",  "then",  "so",    "not",   "no",    "can",  "could",
      "would", "should", "will", "shall", "may",   "might", "must",  "there", "here",  "s",     "any",  "all",
      "some",  "such",  "also", "both",  "each",  "more",  "most",  "other", "same",  "own",   "only", "very"};
  return words;
}

// Question words and pronouns that are capitalized only because they open a
// sentence or are always capitalized.
bool is_common_capitalized(std::string_view word) {
  static const std::unordered_set<std::string> common = {"i", "what", "which", "who", "whom", "whose", "when",
                                                         "where", "why", "how", "is", "are", "was", "were", "do",
                                                         "does", "did", "the", "a", "an", "in", "on", "of"};
  return common.contains(lower(word));
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80 || c == '-' || c == '\'') {
      cur += c;
    } else {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

bool is_capitalized(std::string_view w) { return !w.empty() && std::isupper(static_cast<unsigned char>(w[0])); }

// Maximal runs of capitalized words, allowing lowercase connectors inside a
// run ("University of New Haven"). The opening word counts only when it is not
// a question word.
std::size_t count_named_entities(std::string_view query) {
  static const std::unordered_set<std::string> connectors = {"of", "the", "de", "von", "van", "da", "del", "and"};
  auto words = words_of(query);
  std::size_t entities = 0;
  std::size_t i = 0;
  while (i < words.size()) {
    bool starts = is_capitalized(words[i]) && !(is_common_capitalized(words[i]));
    if (!starts) {
      ++i;
      continue;
    }
    ++entities;
    ++i;
    while (i < words.size()) {
      if (is_capitalized(words[i])) {
        ++i;
      } else if (connectors.contains(words[i]) && i + 1 < words.size() && is_capitalized(words[i + 1]) &&
                 words[i] != "and") {
        i += 2;
      } else {
        break;
      }
    }
  }
  return entities;
}

bool contains_word_pattern(const std::string& lowered, const std::regex& re) { return std::regex_search(lowered, re); }

}  // namespace

std::string_view to_string(TaskType type) {
  switch (type) {
    case TaskType::kArithmetic:
      return "arithmetic";
    case TaskType::kExtractive:
      return "extractive";
    case TaskType::kAbstractive:
      return "abstractive";
    case TaskType::kMultiSource:
      return "multi-source";
    case TaskType::kMultiBridge:
      return "multi-bridge";
  }
  return "extractive";
}

std::string_view to_string(InfoPattern pattern) {
  switch (pattern) {
    case InfoPattern::kExact:
      return "exact";
    case InfoPattern::kSemantic:
      return "semantic";
    case InfoPattern::kSame:
      return "same";
  }
  return "same";
}

std::optional<TaskType> parse_task_type(std::string_view text) {
  auto v = canonical_variant(text);
  for (auto t : kAllTaskTypes) {
    if (v == to_string(t)) return t;
  }
  return std::nullopt;
}

std::optional<InfoPattern> parse_info_pattern(std::string_view text) {
  auto v = canonical_variant(text);
  for (auto p : kAllInfoPatterns) {
    if (v == to_string(p)) return p;
  }
  return std::nullopt;
}

TaskAnalysis fallback_analysis() {
  TaskAnalysis a;
  a.task_type = TaskType::kAbstractive;
  a.info_pattern = InfoPattern::kSame;
  a.evidence_present = false;
  a.backend_id = "fallback";
  return a;
}

PromptPair build_analysis_prompt(std::string_view query, std::span<const std::string> context_chunks) {
  std::string context;
  for (const auto& c : context_chunks) {
    if (!context.empty()) context += "\n\n";
    context += c;
  }
  PromptPair p;
  p.system = std::string(kAnalysisSystemPrompt);
  p.user = "### Context: " + context + " ### Question: " + std::string(query) + " ### Answer:";
  return p;
}

TaskAnalysis parse_analysis(std::string_view raw) {
  auto open = raw.find('{');
  if (open == std::string_view::npos) throw AnalysisParseError("no mapping in analyzer output");
  auto close = raw.find('}', open);
  if (close == std::string_view::npos) throw AnalysisParseError("unterminated mapping in analyzer output");
  std::string body(raw.substr(open, close - open + 1));

  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    std::replace(body.begin(), body.end(), '\'', '"');
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      throw AnalysisParseError(std::string("malformed mapping: ") + e.what());
    }
  }
  if (!j.is_object()) throw AnalysisParseError("analyzer output is not a mapping");

  std::optional<std::string> qtype, itype, containing;
  for (const auto& [key, value] : j.items()) {
    auto k = canonical_variant(key);
    std::string v;
    if (value.is_string()) {
      v = value.get<std::string>();
    } else if (value.is_boolean()) {
      v = value.get<bool>() ? "yes" : "no";
    } else {
      continue;
    }
    if (k == "question-type" && !qtype) qtype = v;
    if (k == "info-type" && !itype) itype = v;
    if (k == "containing" && !containing) containing = v;
  }
  if (!qtype || !itype || !containing) throw AnalysisParseError("analyzer mapping is missing a key");

  TaskAnalysis a;
  auto t = parse_task_type(*qtype);
  if (!t) throw AnalysisParseError("unknown question-type '" + *qtype + "'");
  auto p = parse_info_pattern(*itype);
  if (!p) throw AnalysisParseError("unknown info-type '" + *itype + "'");
  auto c = canonical_variant(*containing);
  if (c == "yes" || c == "true") {
    a.evidence_present = true;
  } else if (c == "no" || c == "false") {
    a.evidence_present = false;
  } else {
    throw AnalysisParseError("unknown containing value '" + *containing + "'");
  }
  a.task_type = *t;
  a.info_pattern = *p;
  a.raw_output = std::string(raw);
  return a;
}

std::string render_analysis(const TaskAnalysis& analysis) {
  return "{\"question-type\": \"" + std::string(to_string(analysis.task_type)) + "\", \"info-type\": \"" +
         std::string(to_string(analysis.info_pattern)) + "\", \"containing\": \"" +
         (analysis.evidence_present ? "yes" : "no") + "\"}";
}

TaskType classify_task_type(std::string_view query) {
  static const std::regex arithmetic(
      R"(\b(how many|how much|difference|total|average|more than|less than|fewer than|percentage|percent|ratio|sum of|change in|increase|decrease)\b)");
  static const std::regex comparison(R"(\b(compare|comparison|both|versus|vs)\b)");
  static const std::regex which_or(R"(\b(which|who|what)\b.*\bor\b)");
  static const std::regex bridge(
      R"(\b(the|a|an)\s+\w+\s+of\s+(the|a|an)\s+\w+(\s+\w+)?\s+(that|which|who|whom|whose|where)\b)");
  static const std::regex of_what(R"(\b(a|an|the)\s+\w+\s+of\s+what\b)");
  static const std::regex role_of(
      R"(\b(where|when|who|what|which|how)\b.*\bthe\s+(director|author|founder|creator|father|mother|wife|husband|son|daughter|spouse|president|owner|producer|writer|composer|singer|performer|star|capital|ceo|leader|coach|manager|architect|publisher|designer)\s+of\b)");
  static const std::regex abstractive(R"(\b(summarize|summarise|summary|describe|discuss|explain|overview)\b)");

  auto q = lower(query);
  if (contains_word_pattern(q, arithmetic)) return TaskType::kArithmetic;
  if ((contains_word_pattern(q, comparison) || contains_word_pattern(q, which_or)) &&
      count_named_entities(query) >= 2) {
    return TaskType::kMultiSource;
  }
  std::size_t possessives = 0;
  for (std::size_t pos = q.find("'s"); pos != std::string::npos; pos = q.find("'s", pos + 2)) ++possessives;
  if (possessives >= 2 || contains_word_pattern(q, bridge) || contains_word_pattern(q, of_what) ||
      contains_word_pattern(q, role_of)) {
    return TaskType::kMultiBridge;
  }
  if (contains_word_pattern(q, abstractive)) return TaskType::kAbstractive;
  return TaskType::kExtractive;
}

InfoPattern classify_info_pattern(std::string_view query) {
  static const std::regex quoted(R"("[^"]+"|\xE2\x80\x9C.+?\xE2\x80\x9D)");
  std::string q(query);
  if (std::regex_search(q, quoted)) return InfoPattern::kExact;
  if (std::any_of(q.begin(), q.end(), [](unsigned char c) { return std::isdigit(c); })) return InfoPattern::kExact;
  auto words = words_of(query);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    bool acronym = w.size() >= 2 && std::all_of(w.begin(), w.end(), [](unsigned char c) {
                     return std::isupper(c) || std::isdigit(c);
                   });
    if (acronym) return InfoPattern::kExact;
    if (i > 0 && is_capitalized(w) && !is_common_capitalized(w)) return InfoPattern::kExact;
  }
  return InfoPattern::kSame;
}

bool detect_evidence(const Tokenizer& tokenizer, std::string_view query, std::span<const std::string> context) {
  std::unordered_set<std::string> wanted;
  for (auto& t : lexical_terms(tokenizer, query)) {
    if (!stopwords().contains(t)) wanted.insert(std::move(t));
  }
  if (wanted.empty()) return false;
  std::unordered_set<std::string> seen;
  for (const auto& c : context) {
    for (auto& t : lexical_terms(tokenizer, c)) seen.insert(std::move(t));
  }
  std::size_t hits = 0;
  for (const auto& w : wanted) hits += seen.contains(w) ? 1 : 0;
  return static_cast<double>(hits) >= 0.4 * static_cast<double>(wanted.size());
}

AnalyzerReply HeuristicAnalyzer::run(const AnalysisRequest& request) {
  TaskAnalysis a;
  a.task_type = classify_task_type(request.query);
  a.info_pattern = classify_info_pattern(request.query);
  a.evidence_present = detect_evidence(*tokenizer_, request.query, request.context);
  return {render_analysis(a), std::nullopt};
}

AnalyzerReply RemoteLmAnalyzer::run(const AnalysisRequest& request) {
  std::vector<ChatMessage> messages{{Role::kSystem, request.prompt.system}, {Role::kUser, request.prompt.user}};
  if (request.attempt > 0) messages.back().content += "\n" + std::string(kStrictFormatReminder);
  auto ex = chat_->complete(messages, params_);
  auto text = ex.response_text;
  return {std::move(text), std::move(ex)};
}

AnalysisOutcome analyze(std::string_view query, IndexCatalog& catalog, AnalyzerBackend& backend,
                        const AnalyzerOptions& options) {
  AnalysisOutcome out;
  out.granularity = options.granularity;

  RetrievalRequest req;
  req.granularity = options.granularity;
  req.top_k = options.top_k;
  req.weights = options.weights;
  req.threshold = 0.0;
  req.fusion_pool = options.fusion_pool;
  auto ranked = catalog.retrieve(query, req);
  auto index = catalog.at(options.granularity)->chunks;

  std::vector<std::string> context;
  for (const auto& e : ranked.entries) {
    out.context_ids.push_back(e.id);
    context.push_back(index->chunk(e.id).text);
  }

  AnalysisRequest request{query, context, build_analysis_prompt(query, context), 0};
  for (int attempt = 0; attempt < 2; ++attempt) {
    request.attempt = attempt;
    ++out.attempts;
    AnalyzerReply reply;
    try {
      reply = backend.run(request);
    } catch (const GatewayError& e) {
      out.failure = std::string("transport: ") + e.what();
      continue;
    }
    if (reply.exchange) out.exchanges.push_back(std::move(*reply.exchange));
    try {
      out.analysis = parse_analysis(reply.text);
      out.analysis.backend_id = backend.id();
      out.failure.clear();
      return out;
    } catch (const AnalysisParseError& e) {
      out.failure = std::string("parse: ") + e.what();
    }
  }
  out.analysis = fallback_analysis();
  out.fallback = true;
  return out;
}

}  // namespace okra

#include "okra/config.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "okra/errors.hpp"

namespace okra {

namespace pt = boost::property_tree;
using nlohmann::json;

std::string_view to_string(EngineMode mode) {
  switch (mode) {
    case EngineMode::kOkra:
      return "okra";
    case EngineMode::kStdRag:
      return "std-rag";
    case EngineMode::kLongContext:
      return "long-context";
  }
  return "okra";
}

std::optional<EngineMode> parse_engine_mode(std::string_view text) {
  for (auto m : {EngineMode::kOkra, EngineMode::kStdRag, EngineMode::kLongContext}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

FusionWeights parse_weights(std::string_view text) {
  std::string s(text);
  for (auto& c : s) {
    if (c == ':' || c == ',' || c == '/') c = ' ';
  }
  std::istringstream in(s);
  double exact = 0.0;
  double semantic = 0.0;
  std::string rest;
  if (!(in >> exact >> semantic) || (in >> rest)) throw ConfigError("invalid weight pair '" + std::string(text) + "'");
  try {
    return FusionWeights(exact, semantic);
  } catch (const Error& e) {
    throw ConfigError("invalid weight pair '" + std::string(text) + "': " + e.what());
  }
}

namespace {

class Reader {
 public:
  Reader(const pt::ptree& tree, std::filesystem::path base) : base_(std::move(base)) {
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("key '" + section + "' outside of a section");
      for (const auto& [key, value] : body) values_[section + "." + key] = value.get_value<std::string>();
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    auto it = take(key);
    if (!it) return;
    out = convert<T>(key, *it);
  }

  void get_path(const std::string& key, std::filesystem::path& out) {
    auto v = take(key);
    if (!v) return;
    std::filesystem::path p(*v);
    out = p.is_relative() && !base_.empty() ? base_ / p : p;
  }

  void get_weights(const std::string& key, FusionWeights& out) {
    if (auto v = take(key)) out = parse_weights(*v);
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    auto v = it->second;
    values_.erase(it);
    return v;
  }

  void reject_leftovers() const {
    if (values_.empty()) return;
    std::string keys;
    for (const auto& [k, _] : values_) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config keys: " + keys);
  }

 static double number(const std::string& key, const std::string& v) { return convert<double>(key, v); }

 private:
  template <typename T>
  static T convert(const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw ConfigError(key + ": expected a boolean, got '" + v + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<T>(d);
      } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
      }
    } else {
      T out{};
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
      }
      return out;
    }
  }

  std::filesystem::path base_;
  std::map<std::string, std::string> values_;
};

EngineConfig from_tree(const pt::ptree& tree, const std::filesystem::path& base) {
  EngineConfig c;
  Reader r(tree, base);

  r.get_path("corpus.path", c.corpus_path);
  r.get("corpus.format", c.corpus_format);
  r.get_path("index.dir", c.index_dir);
  r.get("tokenizer.id", c.tokenizer);

  r.get("analyzer.backend", c.analyzer.backend);
  r.get("analyzer.model", c.analyzer.model);
  r.get("analyzer.endpoint", c.analyzer.endpoint);
  r.get("analyzer.granularity", c.analyzer.granularity);
  r.get("analyzer.top_k", c.analyzer.top_k);
  r.get_weights("analyzer.weights", c.analyzer.weights);

  r.get("gateway.backend", c.gateway.backend);
  r.get("gateway.base_url", c.gateway.base_url);
  r.get("gateway.model", c.gateway.model);
  r.get_path("gateway.mock_script", c.gateway.mock_script);
  r.get("gateway.max_in_flight", c.gateway.max_in_flight);
  r.get("gateway.max_retries", c.gateway.max_retries);
  r.get("gateway.backoff_ms", c.gateway.backoff_ms);
  r.get("gateway.timeout_ms", c.gateway.timeout_ms);
  r.get("gateway.temperature", c.gateway.temperature);
  r.get("gateway.max_tokens", c.gateway.max_tokens);

  r.get("embedding.provider", c.embedding.provider);
  r.get("embedding.dimension", c.embedding.dimension);
  r.get("embedding.seed", c.embedding.seed);
  r.get("embedding.endpoint", c.embedding.endpoint);
  r.get("embedding.model", c.embedding.model);

  r.get("planner.max_steps", c.planner.max_steps);
  r.get("planner.precise_mode", c.planner.precise_mode);
  r.get_weights("planner.weights.exact", c.planner.exact_weights);
  r.get_weights("planner.weights.semantic", c.planner.semantic_weights);
  r.get_weights("planner.weights.same", c.planner.same_weights);
  r.get("planner.threshold", c.planner.threshold);

  r.get("retrieval.fusion_pool", c.retrieval.fusion_pool);
  c.planner.fusion_pool = c.retrieval.fusion_pool;
  r.get("retrieval.std_rag_granularity", c.retrieval.std_rag_granularity);
  r.get("retrieval.std_rag_top_k", c.retrieval.std_rag_top_k);
  r.get("retrieval.long_context_token_limit", c.retrieval.long_context.token_limit);
  r.get("retrieval.long_context_top_k", c.retrieval.long_context.top_k);
  r.get("retrieval.long_context_granularity", c.retrieval.long_context.granularity);

  if (auto mode = r.take("engine.mode")) {
    auto m = parse_engine_mode(*mode);
    if (!m) throw ConfigError("engine.mode: unknown mode '" + *mode + "'");
    c.mode = *m;
  }
  r.get("bench.parallelism", c.bench_parallelism);

  std::optional<double> budget;
  if (auto v = r.take("runtime.budget_weighted_tokens")) {
    double b = 0.0;
    b = Reader::number("runtime.budget_weighted_tokens", *v);
    budget = b;
  }
  if (budget) c.env.budget_weighted_tokens = *budget;
  if (auto v = r.take("runtime.latency_threshold_ms")) {
    double ms = Reader::number("runtime.latency_threshold_ms", *v);
    c.env.latency_threshold = std::chrono::milliseconds(static_cast<long long>(ms));
  }
  r.reject_leftovers();

  if (c.planner.max_steps == 0) throw ConfigError("planner.max_steps must be >= 1");
  if (!(c.planner.threshold >= 0.0 && c.planner.threshold < 1.0)) throw ConfigError("planner.threshold must be in [0, 1)");
  if (c.bench_parallelism == 0) throw ConfigError("bench.parallelism must be >= 1");
  validate(c.env);
  return c;
}

}  // namespace

EngineConfig parse_config(std::string_view ini_text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_tree(tree, base_dir);
}

EngineConfig load_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_tree(tree, path.parent_path());
}

void to_json(json& j, const EngineConfig& c) {
  auto weights = [](const FusionWeights& w) { return json::array({w.exact(), w.semantic()}); };
  j = json{
      {"corpus", {{"path", c.corpus_path.string()}, {"format", c.corpus_format}}},
      {"index", {{"dir", c.index_dir.string()}}},
      {"tokenizer", c.tokenizer},
      {"analyzer",
       {{"backend", c.analyzer.backend},
        {"model", c.analyzer.model},
        {"endpoint", c.analyzer.endpoint},
        {"granularity", c.analyzer.granularity},
        {"top_k", c.analyzer.top_k},
        {"weights", weights(c.analyzer.weights)}}},
      {"gateway",
       {{"backend", c.gateway.backend},
        {"base_url", c.gateway.base_url},
        {"model", c.gateway.model},
        {"mock_script", c.gateway.mock_script.string()},
        {"max_in_flight", c.gateway.max_in_flight},
        {"temperature", c.gateway.temperature},
        {"max_tokens", c.gateway.max_tokens}}},
      {"embedding",
       {{"provider", c.embedding.provider}, {"dimension", c.embedding.dimension}, {"model", c.embedding.model}}},
      {"planner",
       {{"max_steps", c.planner.max_steps},
        {"precise_mode", c.planner.precise_mode},
        {"weights",
         {{"exact", weights(c.planner.exact_weights)},
          {"semantic", weights(c.planner.semantic_weights)},
          {"same", weights(c.planner.same_weights)}}},
        {"threshold", c.planner.threshold}}},
      {"retrieval",
       {{"fusion_pool", c.retrieval.fusion_pool},
        {"std_rag_granularity", c.retrieval.std_rag_granularity},
        {"std_rag_top_k", c.retrieval.std_rag_top_k},
        {"long_context_token_limit", c.retrieval.long_context.token_limit},
        {"long_context_top_k", c.retrieval.long_context.top_k},
        {"long_context_granularity", c.retrieval.long_context.granularity}}},
      {"mode", to_string(c.mode)},
      {"bench", {{"parallelism", c.bench_parallelism}}}};
  if (c.env.budget_weighted_tokens) j["runtime"]["budget_weighted_tokens"] = *c.env.budget_weighted_tokens;
  if (c.env.latency_threshold) j["runtime"]["latency_threshold_ms"] = c.env.latency_threshold->count();
}

}  // namespace okra

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "okra/executor.hpp"
#include "okra/planner.hpp"

namespace okra {

enum class EngineMode { kOkra, kStdRag, kLongContext };

std::string_view to_string(EngineMode mode);
std::optional<EngineMode> parse_engine_mode(std::string_view text);

struct AnalyzerConfig {
  std::string backend = "heuristic";  // heuristic | remote-lm
  std::string model;
  std::string endpoint;
  std::size_t granularity = 150;
  std::size_t top_k = 3;
  FusionWeights weights{1.0, 1.0};
};

struct GatewayConfig {
  std::string backend = "mock";  // mock | remote
  std::string base_url;
  std::string model;
  std::filesystem::path mock_script;
  std::size_t max_in_flight = 4;
  std::size_t max_retries = 2;
  std::size_t backoff_ms = 250;
  std::size_t timeout_ms = 60000;
  double temperature = 0.0;
  std::size_t max_tokens = 512;
};

struct EmbeddingConfig {
  std::string provider = "hashing";  // hashing | remote
  std::size_t dimension = 256;
  std::uint64_t seed = 0x6f6b7261ULL;
  std::string endpoint;
  std::string model;
};

struct RetrievalDefaults {
  std::size_t fusion_pool = 20;
  std::size_t std_rag_granularity = 512;
  std::size_t std_rag_top_k = 5;
  LongContextOptions long_context;
};

struct EngineConfig {
  std::filesystem::path corpus_path;
  std::string corpus_format = "jsonl";
  std::filesystem::path index_dir;
  std::string tokenizer = "ws-punct-v1";
  AnalyzerConfig analyzer;
  GatewayConfig gateway;
  EmbeddingConfig embedding;
  PlannerOptions planner;
  RetrievalDefaults retrieval;
  RuntimeEnv env;
  EngineMode mode = EngineMode::kOkra;
  std::size_t bench_parallelism = 1;
};

// INI file with sections, e.g.
//   [corpus]  path = docs.jsonl
//   [planner] weights.exact = 3:2
// Relative paths resolve against the config file's directory. Unknown keys
// are rejected.
EngineConfig load_config(const std::filesystem::path& path);
EngineConfig parse_config(std::string_view ini_text, const std::filesystem::path& base_dir = {});

// "3:2", "0.6,0.4" or "0.6 0.4".
FusionWeights parse_weights(std::string_view text);

void to_json(nlohmann::json& j, const EngineConfig& config);

}  // namespace okra

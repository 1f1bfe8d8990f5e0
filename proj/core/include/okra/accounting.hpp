#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "okra/gateway.hpp"

namespace okra {

// Output tokens are priced at four times input tokens.
inline constexpr double kOutputCostWeight = 4.0;

using StageLatencies = std::map<std::string, std::chrono::nanoseconds>;

struct CostReport {
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double weighted_cost = 0.0;
  StageLatencies per_stage_latency;
  std::size_t num_llm_calls = 0;
};

CostReport weighted_cost(std::span<const ChatExchange> exchanges);

inline double weigh(std::size_t input_tokens, std::size_t output_tokens) {
  return static_cast<double>(input_tokens) + kOutputCostWeight * static_cast<double>(output_tokens);
}

// Lowercase, drop ASCII punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

// Token-level F1 after normalization, maximised over the golds.
double f1_score(std::string_view prediction, std::span<const std::string> golds);

// The number an answer consists of, after dropping currency symbols, '%',
// thousands separators and a trailing period. nullopt for anything else.
std::optional<double> parse_numeric_answer(std::string_view text);

// Numeric answers compare with relative tolerance 1e-4; anything else by
// normalized string equality.
double em_score(std::string_view prediction, std::span<const std::string> golds);

enum class Metric { kEm, kF1 };

std::string_view to_string(Metric metric);
std::optional<Metric> parse_metric(std::string_view text);

double score_answer(Metric metric, std::string_view prediction, std::span<const std::string> golds);

struct EvalRecord {
  std::string query_id;
  std::string prediction;
  std::vector<std::string> golds;
  Metric metric = Metric::kF1;
  double score = 0.0;
  CostReport cost;
  std::string pipeline;
  std::chrono::nanoseconds context_latency{0};
  std::chrono::nanoseconds generation_latency{0};
  std::optional<std::string> error;  // set when the query failed; score is 0
};

struct PipelineBreakdown {
  std::size_t count = 0;
  double score = 0.0;  // mean x 100
  double cost = 0.0;   // mean / 10^3
};

struct BenchmarkSummary {
  std::size_t count = 0;
  std::size_t failures = 0;
  bool zero_count = true;
  double score = 0.0;            // mean score x 100
  double cost = 0.0;             // mean weighted cost / 10^3
  double latency_seconds = 0.0;  // mean end-to-end
  double context_seconds = 0.0;
  double generation_seconds = 0.0;
  std::map<std::string, PipelineBreakdown> per_pipeline;
};

BenchmarkSummary aggregate_report(std::span<const EvalRecord> records);

// "score 75.0 | cost 1.0 (x10^3 tokens) | latency 0.12s (context 0.02s, generation 0.10s) | n=2 failures=0"
std::string format_summary_line(const BenchmarkSummary& summary);

void to_json(nlohmann::json& j, const CostReport& report);
void to_json(nlohmann::json& j, const EvalRecord& record);
void to_json(nlohmann::json& j, const BenchmarkSummary& summary);

}  // namespace okra

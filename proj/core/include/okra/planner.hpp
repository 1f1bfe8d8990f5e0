#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "okra/analyzer.hpp"
#include "okra/retrieval.hpp"

namespace okra {

enum class PipelineKind { kDirect, kSplitAggregate, kStepWise, kContextExtension, kLongContext };

std::string_view to_string(PipelineKind kind);
std::optional<PipelineKind> parse_pipeline_kind(std::string_view text);

struct RetrievalConfig {
  std::size_t granularity = 150;
  std::size_t top_k = 5;
  FusionWeights weights{1.0, 1.0};
  double threshold = 0.1;
  std::size_t fusion_pool = 20;

  RetrievalRequest request() const { return {granularity, top_k, weights, threshold, fusion_pool}; }
  friend bool operator==(const RetrievalConfig&, const RetrievalConfig&) = default;
};

inline constexpr std::string_view kUnanswerableToken = "unanswerable";

struct GenerationPolicy {
  bool precise_mode = false;
  std::size_t max_reasoning_steps = 5;
  std::string unanswerable_token{kUnanswerableToken};

  friend bool operator==(const GenerationPolicy&, const GenerationPolicy&) = default;
};

struct ExecutionPlan {
  PipelineKind pipeline = PipelineKind::kDirect;
  RetrievalConfig retrieval;
  GenerationPolicy generation;
  TaskAnalysis analysis;
};

// Runtime caps. The budget is enforced by the executor as a hard abort; the
// latency cap is only reported.
struct RuntimeEnv {
  std::optional<double> budget_weighted_tokens;
  std::optional<std::chrono::milliseconds> latency_threshold;
};

void validate(const RuntimeEnv& env);

struct PlannerOptions {
  std::size_t max_steps = 5;
  bool precise_mode = false;
  FusionWeights exact_weights{0.6, 0.4};
  FusionWeights semantic_weights{0.4, 0.6};
  FusionWeights same_weights{0.5, 0.5};
  double threshold = 0.1;
  std::size_t fusion_pool = 20;
};

// Retrieval scope and granularity constants.
inline constexpr std::size_t kContextualTopK = 8;
inline constexpr std::size_t kFactoidTopK = 5;
inline constexpr std::size_t kEvidenceGranularity = 150;
inline constexpr std::size_t kContextualExpandedGranularity = 400;
inline constexpr std::size_t kFactoidExpandedGranularity = 256;

// Abstractive tasks need broad context; everything else is factoid.
bool is_contextual(TaskType type);

PipelineKind select_pipeline(const TaskAnalysis& analysis);
RetrievalConfig select_retrieval(const TaskAnalysis& analysis, const PlannerOptions& options = {});
FusionWeights select_weights(const TaskAnalysis& analysis, const PlannerOptions& options = {});

ExecutionPlan make_plan(const TaskAnalysis& analysis, const RuntimeEnv& env = {}, const PlannerOptions& options = {});

// Empty when the plan agrees with the decision table for its analysis;
// otherwise one message per violated field.
std::vector<std::string> validate_plan(const ExecutionPlan& plan, const PlannerOptions& options = {});

}  // namespace okra

#include "okra/planner.hpp"

#include "okra/errors.hpp"

namespace okra {

std::string_view to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::kDirect:
      return "direct";
    case PipelineKind::kSplitAggregate:
      return "split_aggregate";
    case PipelineKind::kStepWise:
      return "step_wise";
    case PipelineKind::kContextExtension:
      return "context_extension";
    case PipelineKind::kLongContext:
      return "long_context";
  }
  return "direct";
}

std::optional<PipelineKind> parse_pipeline_kind(std::string_view text) {
  for (auto k : {PipelineKind::kDirect, PipelineKind::kSplitAggregate, PipelineKind::kStepWise,
                 PipelineKind::kContextExtension, PipelineKind::kLongContext}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

void validate(const RuntimeEnv& env) {
  if (env.budget_weighted_tokens && !(*env.budget_weighted_tokens > 0.0)) {
    throw ConfigError("budget must be positive");
  }
  if (env.latency_threshold && env.latency_threshold->count() <= 0) {
    throw ConfigError("latency threshold must be positive");
  }
}

bool is_contextual(TaskType type) { return type == TaskType::kAbstractive; }

PipelineKind select_pipeline(const TaskAnalysis& analysis) {
  switch (analysis.task_type) {
    case TaskType::kMultiBridge:
      return PipelineKind::kStepWise;
    case TaskType::kMultiSource:
      return PipelineKind::kSplitAggregate;
    case TaskType::kArithmetic:
      return PipelineKind::kContextExtension;
    case TaskType::kExtractive:
    case TaskType::kAbstractive:
      return PipelineKind::kDirect;
  }
  return PipelineKind::kDirect;
}

FusionWeights select_weights(const TaskAnalysis& analysis, const PlannerOptions& options) {
  switch (analysis.info_pattern) {
    case InfoPattern::kExact:
      return options.exact_weights;
    case InfoPattern::kSemantic:
      return options.semantic_weights;
    case InfoPattern::kSame:
      return options.same_weights;
  }
  return options.same_weights;
}

RetrievalConfig select_retrieval(const TaskAnalysis& analysis, const PlannerOptions& options) {
  const bool contextual = is_contextual(analysis.task_type);
  RetrievalConfig cfg;
  cfg.top_k = contextual ? kContextualTopK : kFactoidTopK;
  if (analysis.evidence_present) {
    cfg.granularity = kEvidenceGranularity;
  } else {
    cfg.granularity = contextual ? kContextualExpandedGranularity : kFactoidExpandedGranularity;
  }
  cfg.weights = select_weights(analysis, options);
  cfg.threshold = options.threshold;
  cfg.fusion_pool = options.fusion_pool;
  return cfg;
}

ExecutionPlan make_plan(const TaskAnalysis& analysis, const RuntimeEnv& env, const PlannerOptions& options) {
  validate(env);
  if (options.max_steps == 0) throw ConfigError("planner.max_steps must be >= 1");
  if (!(options.threshold >= 0.0 && options.threshold < 1.0)) throw ConfigError("planner.threshold must be in [0, 1)");

  ExecutionPlan plan;
  plan.pipeline = select_pipeline(analysis);
  plan.retrieval = select_retrieval(analysis, options);
  plan.generation.precise_mode = options.precise_mode;
  plan.generation.max_reasoning_steps = options.max_steps;
  plan.analysis = analysis;
  return plan;
}

std::vector<std::string> validate_plan(const ExecutionPlan& plan, const PlannerOptions& options) {
  std::vector<std::string> problems;
  const auto& r = plan.retrieval;
  if (r.top_k == 0) problems.emplace_back("top_k must be >= 1");
  if (r.granularity == 0) problems.emplace_back("granularity must be >= 1");
  if (!(r.threshold >= 0.0 && r.threshold < 1.0)) problems.emplace_back("threshold must be in [0, 1)");
  if (plan.generation.max_reasoning_steps == 0) problems.emplace_back("max_reasoning_steps must be >= 1");

  if (plan.pipeline != select_pipeline(plan.analysis)) problems.emplace_back("pipeline disagrees with task type");
  auto expected = select_retrieval(plan.analysis, options);
  if (r.top_k != expected.top_k) problems.emplace_back("top_k disagrees with task scope");
  if (r.granularity != expected.granularity) problems.emplace_back("granularity disagrees with evidence state");
  if (!(r.weights == expected.weights)) problems.emplace_back("weights disagree with info pattern");
  if (r.threshold != expected.threshold) problems.emplace_back("threshold disagrees with options");
  if (r.fusion_pool != expected.fusion_pool) problems.emplace_back("fusion pool disagrees with options");
  return problems;
}

}  // namespace okra

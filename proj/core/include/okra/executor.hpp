#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "okra/accounting.hpp"
#include "okra/corpus.hpp"
#include "okra/gateway.hpp"
#include "okra/planner.hpp"
#include "okra/retrieval.hpp"

namespace okra {

struct ContextBlock {
  std::string doc_id;
  std::size_t doc_position = 0;
  std::size_t first_ordinal = 0;
  std::size_t last_ordinal = 0;  // inclusive
  std::string text;
  std::vector<ChunkId> provenance;
};

struct StepTrace {
  std::size_t step_index = 0;
  std::string query_used;
  std::string evidence_extracted;
  std::optional<std::string> next_query;
  std::optional<std::string> terminal_answer;
  bool unparseable = false;
};

enum class FallbackKind { kPrecise, kLongContext };

std::string_view to_string(FallbackKind kind);

struct QueryResult {
  std::string answer;
  PipelineKind pipeline = PipelineKind::kDirect;
  std::vector<StepTrace> steps;
  std::vector<std::string> sub_queries;
  std::vector<ContextBlock> context_blocks;
  std::vector<ChatExchange> usage;
  double weighted_cost = 0.0;
  StageLatencies stage_latencies;
  std::optional<FallbackKind> fallback_taken;
  bool long_context_truncated = false;  // corpus over the token limit, top chunks used
  bool latency_exceeded = false;
  std::vector<std::string> notes;
};

// Raised with whatever was executed before the failure.
class ExecutionError : public Error {
 public:
  ExecutionError(const std::string& what, QueryResult partial) : Error(what), partial_(std::move(partial)) {}
  const QueryResult& partial() const noexcept { return partial_; }

 private:
  QueryResult partial_;
};

class BudgetExceeded : public ExecutionError {
 public:
  using ExecutionError::ExecutionError;
};

struct LongContextOptions {
  std::size_t token_limit = 128000;
  std::size_t top_k = 200;
  std::size_t granularity = 512;
};

struct EngineHandles {
  IndexCatalog& catalog;
  ChatBackend& chat;
  GenerationParams params{};
  RuntimeEnv env{};
  LongContextOptions long_context{};
};

// A line looks like a table row when it has at least two cell separators:
// runs of two or more spaces, tabs, or '|'.
bool is_table_line(std::string_view line);

// Grows a span to the enclosing table when its first or last line is a table
// row: row by row outward while neighbours are rows, plus up to two adjacent
// non-blank header or caption lines above. Other spans come back unchanged.
CharSpan recover_table(const Document& doc, CharSpan span);

// Extends each selected chunk by `extend_radius` neighbours, optionally grows
// selections to enclosing tables, and merges touching or overlapping ordinal
// ranges within a document. Blocks are ordered by (document, first ordinal).
std::vector<ContextBlock> process_context(const ChunkIndex& index, const Corpus& corpus,
                                          std::span<const ChunkId> selected, std::size_t extend_radius,
                                          bool recover_tables);
std::vector<ContextBlock> process_context(const ChunkIndex& index, const Corpus& corpus, const RankedContext& ranked,
                                          std::size_t extend_radius, bool recover_tables);

std::string render_context(std::span<const ContextBlock> blocks);

extern const std::string_view kQaSystemPrompt;
extern const std::string_view kSplitSystemPrompt;
extern const std::string_view kStepSystemPrompt;

std::vector<ChatMessage> build_qa_messages(std::string_view question, std::string_view context);
std::vector<ChatMessage> build_split_messages(std::string_view question);
std::vector<ChatMessage> build_step_messages(std::string_view question, std::string_view context);

inline constexpr std::size_t kMaxSubQueries = 5;

// One sub-question per non-empty line, list markers stripped, at most `cap`.
std::vector<std::string> parse_sub_queries(std::string_view text, std::size_t cap = kMaxSubQueries);

struct StepOutput {
  bool parsed = false;
  std::string evidence;
  std::optional<std::string> next_query;
  std::optional<std::string> answer;  // nullopt when the model answered "None"
};

StepOutput parse_step_output(std::string_view text);

// Text after "The answer is:" when present, else the whole field, trimmed.
std::string extract_answer(std::string_view field);

QueryResult run_direct(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles);
QueryResult run_split_aggregate(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles);
QueryResult run_step_wise(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles);
QueryResult run_context_extension(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles);
QueryResult run_long_context(std::string_view query, EngineHandles& handles);

// Dispatches on plan.pipeline. In precise mode an answer containing the
// unanswerable token is retried through run_long_context.
QueryResult execute(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles);

bool mentions_unanswerable(std::string_view answer, std::string_view token = kUnanswerableToken);

}  // namespace okra

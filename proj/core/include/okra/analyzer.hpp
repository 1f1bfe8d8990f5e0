#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "okra/corpus.hpp"
#include "okra/gateway.hpp"
#include "okra/retrieval.hpp"

namespace okra {

enum class TaskType { kArithmetic, kExtractive, kAbstractive, kMultiSource, kMultiBridge };
enum class InfoPattern { kExact, kSemantic, kSame };

inline constexpr TaskType kAllTaskTypes[] = {TaskType::kArithmetic, TaskType::kExtractive, TaskType::kAbstractive,
                                             TaskType::kMultiSource, TaskType::kMultiBridge};
inline constexpr InfoPattern kAllInfoPatterns[] = {InfoPattern::kExact, InfoPattern::kSemantic, InfoPattern::kSame};

// Wire spelling used by the analysis prompt ("multi-bridge", "same", ...).
std::string_view to_string(TaskType type);
std::string_view to_string(InfoPattern pattern);
// Case-insensitive; '_' and ' ' are accepted in place of '-'.
std::optional<TaskType> parse_task_type(std::string_view text);
std::optional<InfoPattern> parse_info_pattern(std::string_view text);

struct TaskAnalysis {
  TaskType task_type = TaskType::kExtractive;
  InfoPattern info_pattern = InfoPattern::kSame;
  bool evidence_present = false;
  std::string backend_id;
  std::string raw_output;
};

inline bool same_verdicts(const TaskAnalysis& a, const TaskAnalysis& b) {
  return a.task_type == b.task_type && a.info_pattern == b.info_pattern && a.evidence_present == b.evidence_present;
}

// Used whenever the backend output cannot be parsed.
TaskAnalysis fallback_analysis();

struct PromptPair {
  std::string system;
  std::string user;
};

extern const std::string_view kAnalysisSystemPrompt;
extern const std::string_view kStrictFormatReminder;

PromptPair build_analysis_prompt(std::string_view query, std::span<const std::string> context_chunks);

// Reads the first {...} mapping in `raw`. Throws AnalysisParseError.
TaskAnalysis parse_analysis(std::string_view raw);

// Canonical mapping, e.g. {"question-type": "extractive", "info-type": "exact", "containing": "yes"}.
std::string render_analysis(const TaskAnalysis& analysis);

struct AnalysisRequest {
  std::string_view query;
  std::span<const std::string> context;
  PromptPair prompt;
  int attempt = 0;  // 0 first try, 1 retry
};

struct AnalyzerReply {
  std::string text;
  std::optional<ChatExchange> exchange;
};

class AnalyzerBackend {
 public:
  virtual ~AnalyzerBackend() = default;
  virtual std::string id() const = 0;
  virtual AnalyzerReply run(const AnalysisRequest& request) = 0;
};

// Rule-based stand-in for a trained analyzer model. Deterministic.
class HeuristicAnalyzer final : public AnalyzerBackend {
 public:
  explicit HeuristicAnalyzer(std::shared_ptr<const Tokenizer> tokenizer) : tokenizer_(std::move(tokenizer)) {}

  std::string id() const override { return "heuristic"; }
  AnalyzerReply run(const AnalysisRequest& request) override;

 private:
  std::shared_ptr<const Tokenizer> tokenizer_;
};

TaskType classify_task_type(std::string_view query);
InfoPattern classify_info_pattern(std::string_view query);
// True iff at least 40% of the query's non-stopword terms occur in the context.
bool detect_evidence(const Tokenizer& tokenizer, std::string_view query, std::span<const std::string> context);

// Sends the analysis prompt through a chat backend. The retry attempt appends
// kStrictFormatReminder to the user message.
class RemoteLmAnalyzer final : public AnalyzerBackend {
 public:
  RemoteLmAnalyzer(std::shared_ptr<ChatBackend> chat, GenerationParams params = {0.0, 64})
      : chat_(std::move(chat)), params_(params) {}

  std::string id() const override { return "remote-lm:" + chat_->id(); }
  AnalyzerReply run(const AnalysisRequest& request) override;

 private:
  std::shared_ptr<ChatBackend> chat_;
  GenerationParams params_;
};

struct AnalyzerOptions {
  std::size_t granularity = 150;
  std::size_t top_k = 3;
  FusionWeights weights{1.0, 1.0};
  std::size_t fusion_pool = 20;
};

struct AnalysisOutcome {
  TaskAnalysis analysis;
  bool fallback = false;
  int attempts = 0;
  std::string failure;  // parse or transport error behind a fallback
  std::size_t granularity = 0;
  std::vector<ChunkId> context_ids;
  std::vector<ChatExchange> exchanges;
};

// Retrieves the analysis context, asks the backend, parses. One retry on a
// parse or transport failure, then the fallback analysis.
AnalysisOutcome analyze(std::string_view query, IndexCatalog& catalog, AnalyzerBackend& backend,
                        const AnalyzerOptions& options = {});

}  // namespace okra

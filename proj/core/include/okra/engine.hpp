#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "okra/accounting.hpp"
#include "okra/analyzer.hpp"
#include "okra/config.hpp"
#include "okra/executor.hpp"
#include "okra/http.hpp"
#include "okra/planner.hpp"

namespace okra {

// Optional overrides; anything left empty is built from the config.
struct EngineParts {
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<AnalyzerBackend> analyzer;
  std::shared_ptr<const EmbeddingProvider> embedder;
  std::shared_ptr<HttpTransport> transport;
};

struct QueryOptions {
  std::optional<EngineMode> mode;
  std::optional<bool> precise;
};

struct QueryTrace {
  EngineMode mode = EngineMode::kOkra;
  std::string question;
  std::optional<AnalysisOutcome> analysis;
  std::optional<ExecutionPlan> plan;
  QueryResult result;
  std::optional<std::string> error;
};

struct IndexBuildReport {
  struct Entry {
    std::size_t granularity = 0;
    std::size_t chunks = 0;
    bool built = false;
  };
  std::vector<Entry> entries;
  bool up_to_date = false;
};

inline constexpr std::size_t kDefaultGranularities[] = {150, 512};

class Engine {
 public:
  explicit Engine(EngineConfig config, EngineParts parts = {});

  const EngineConfig& config() const noexcept { return config_; }
  IndexCatalog& catalog() noexcept { return *catalog_; }
  ChatBackend& chat() noexcept { return *chat_; }
  AnalyzerBackend& analyzer() noexcept { return *analyzer_; }

  // Builds the default granularities and persists them to config.index_dir.
  // Nothing is rebuilt when the directory already holds them for this corpus.
  IndexBuildReport build_indexes(std::span<const std::size_t> granularities = kDefaultGranularities);

  // Throws ExecutionError (carrying the partial trace in QueryTraceError) on
  // gateway or retrieval failure.
  QueryTrace answer(std::string_view question, const QueryOptions& options = {});

  ExecutionPlan std_rag_plan(bool precise) const;

 private:
  EngineConfig config_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::shared_ptr<CorpusStore> store_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  std::unique_ptr<IndexCatalog> catalog_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<ChatBackend> chat_;
  std::shared_ptr<AnalyzerBackend> analyzer_;
  bool loaded_from_disk_ = false;
};

class QueryTraceError : public Error {
 public:
  QueryTraceError(const std::string& what, QueryTrace trace) : Error(what), trace_(std::move(trace)) {}
  const QueryTrace& trace() const noexcept { return trace_; }

 private:
  QueryTrace trace_;
};

void to_json(nlohmann::json& j, const TaskAnalysis& analysis);
void to_json(nlohmann::json& j, const AnalysisOutcome& outcome);
void to_json(nlohmann::json& j, const ExecutionPlan& plan);
void to_json(nlohmann::json& j, const ChatExchange& exchange);
void to_json(nlohmann::json& j, const ContextBlock& block);
void to_json(nlohmann::json& j, const StepTrace& step);
void to_json(nlohmann::json& j, const QueryResult& result);
void to_json(nlohmann::json& j, const QueryTrace& trace);

// Benchmark harness.

struct BenchItem {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
  Metric metric = Metric::kF1;
};

// One JSON object per line: {"id", "question", "answers": [...], "metric": "em"|"f1"}.
std::vector<BenchItem> load_dataset(const std::filesystem::path& path);
std::vector<BenchItem> load_dataset(std::istream& in);

// Per-record failures are captured in EvalRecord::error; records come back in
// dataset order regardless of parallelism.
std::vector<EvalRecord> run_benchmark(Engine& engine, std::span<const BenchItem> items, const QueryOptions& options = {},
                                      std::size_t parallelism = 1);

EvalRecord evaluate(const BenchItem& item, const QueryTrace& trace);

}  // namespace okra

#include "okra/engine.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "okra/errors.hpp"

namespace okra {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

bool manifest_matches(const std::optional<IndexManifest>& m, const Tokenizer& tok, const Corpus* corpus) {
  if (!m || m->tokenizer != tok.id()) return false;
  return corpus == nullptr || corpus->fingerprint() == m->fingerprint;
}

std::shared_ptr<ChatBackend> make_remote_chat(std::shared_ptr<HttpTransport> transport, const GatewayConfig& g,
                                              std::string base_url, std::string model,
                                              std::shared_ptr<const Tokenizer> tok) {
  if (base_url.empty()) throw ConfigError("remote backend requires an endpoint url");
  RemoteChatOptions opts;
  opts.base_url = std::move(base_url);
  opts.model = std::move(model);
  opts.max_retries = g.max_retries;
  opts.initial_backoff = std::chrono::milliseconds(g.backoff_ms);
  opts.max_in_flight = std::max<std::size_t>(1, g.max_in_flight);
  return std::make_shared<RemoteChatBackend>(std::move(transport), std::move(opts), std::move(tok));
}

}  // namespace

Engine::Engine(EngineConfig config, EngineParts parts) : config_(std::move(config)) {
  tokenizer_ = make_tokenizer(config_.tokenizer);
  parse_corpus_format(config_.corpus_format);

  auto corpus = parts.corpus;
  if (!corpus && !config_.corpus_path.empty()) {
    corpus = std::make_shared<const Corpus>(
        ingest_corpus(config_.corpus_path, parse_corpus_format(config_.corpus_format)));
  }

  if (!config_.index_dir.empty()) {
    auto manifest = read_manifest(config_.index_dir);
    if (manifest_matches(manifest, *tokenizer_, corpus.get())) {
      store_ = CorpusStore::open(config_.index_dir, tokenizer_);
      loaded_from_disk_ = true;
    } else if (manifest && manifest->tokenizer != tokenizer_->id() && !corpus) {
      throw IndexError("index in " + config_.index_dir.string() + " was built with tokenizer '" +
                       manifest->tokenizer + "', active tokenizer is '" + tokenizer_->id() + "'");
    }
  }
  if (!store_) {
    if (!corpus) throw ConfigError("no corpus: set corpus.path or point index.dir at a built index");
    store_ = std::make_shared<CorpusStore>(corpus, tokenizer_);
  }

  transport_ = parts.transport;
  auto transport = [&] {
    if (!transport_) transport_ = std::make_shared<HttplibTransport>(std::chrono::milliseconds(config_.gateway.timeout_ms));
    return transport_;
  };

  embedder_ = parts.embedder;
  if (!embedder_) {
    const auto& e = config_.embedding;
    if (e.provider == "hashing") {
      embedder_ = std::make_shared<HashingEmbedder>(tokenizer_, e.dimension, e.seed);
    } else if (e.provider == "remote") {
      if (e.endpoint.empty()) throw ConfigError("embedding.endpoint is required for the remote provider");
      embedder_ = std::make_shared<RemoteEmbedder>(transport(), e.endpoint, e.model, e.dimension);
    } else {
      throw ConfigError("embedding.provider: unknown provider '" + e.provider + "'");
    }
  }
  catalog_ = std::make_unique<IndexCatalog>(store_, embedder_);
  if (loaded_from_disk_) catalog_->load_dense(config_.index_dir);

  chat_ = parts.chat;
  if (!chat_) {
    const auto& g = config_.gateway;
    if (g.backend == "mock") {
      if (!g.mock_script.empty()) chat_ = ScriptedBackend::from_file(g.mock_script, tokenizer_);
    } else if (g.backend == "remote") {
      chat_ = make_remote_chat(transport(), g, g.base_url, g.model, tokenizer_);
    } else {
      throw ConfigError("gateway.backend: unknown backend '" + g.backend + "'");
    }
  }

  analyzer_ = parts.analyzer;
  if (!analyzer_) {
    const auto& a = config_.analyzer;
    if (a.backend == "heuristic") {
      analyzer_ = std::make_shared<HeuristicAnalyzer>(tokenizer_);
    } else if (a.backend == "remote-lm") {
      std::shared_ptr<ChatBackend> chat;
      if (!a.endpoint.empty()) {
        chat = make_remote_chat(transport(), config_.gateway, a.endpoint, a.model, tokenizer_);
      } else if (chat_) {
        chat = chat_;
      } else {
        throw ConfigError("analyzer.backend remote-lm needs analyzer.endpoint or a gateway backend");
      }
      analyzer_ = std::make_shared<RemoteLmAnalyzer>(std::move(chat));
    } else {
      throw ConfigError("analyzer.backend: unknown backend '" + a.backend + "'");
    }
  }
}

IndexBuildReport Engine::build_indexes(std::span<const std::size_t> granularities) {
  IndexBuildReport report;
  bool complete = loaded_from_disk_;
  if (complete) {
    auto have = store_->granularities();
    for (auto g : granularities) {
      if (std::find(have.begin(), have.end(), g) == have.end()) complete = false;
    }
  }
  for (auto g : granularities) {
    bool had = store_->find(g) != nullptr;
    auto gi = catalog_->at(g);
    report.entries.push_back({g, gi->chunks->size(), !had});
  }
  report.up_to_date = complete;
  if (!config_.index_dir.empty() && !complete) {
    std::filesystem::create_directories(config_.index_dir);
    catalog_->persist(config_.index_dir);
    loaded_from_disk_ = true;
  }
  return report;
}

ExecutionPlan Engine::std_rag_plan(bool precise) const {
  ExecutionPlan plan;
  plan.pipeline = PipelineKind::kDirect;
  plan.retrieval.granularity = config_.retrieval.std_rag_granularity;
  plan.retrieval.top_k = config_.retrieval.std_rag_top_k;
  plan.retrieval.weights = FusionWeights(0.0, 1.0);
  plan.retrieval.threshold = 0.0;
  plan.retrieval.fusion_pool = std::max(config_.retrieval.fusion_pool, config_.retrieval.std_rag_top_k);
  plan.generation.precise_mode = precise;
  plan.generation.max_reasoning_steps = config_.planner.max_steps;
  return plan;
}

QueryTrace Engine::answer(std::string_view question, const QueryOptions& options) {
  QueryTrace trace;
  trace.mode = options.mode.value_or(config_.mode);
  trace.question = std::string(question);
  const bool precise = options.precise.value_or(config_.planner.precise_mode);

  if (!chat_) throw ConfigError("no generation backend: set gateway.mock_script or gateway.backend = remote");
  EngineHandles handles{*catalog_, *chat_, {config_.gateway.temperature, config_.gateway.max_tokens}, config_.env,
                        config_.retrieval.long_context};

  Clock::duration analysis_time{};
  try {
    switch (trace.mode) {
      case EngineMode::kOkra: {
        AnalyzerOptions ao{config_.analyzer.granularity, config_.analyzer.top_k, config_.analyzer.weights,
                           config_.retrieval.fusion_pool};
        auto t0 = Clock::now();
        trace.analysis = analyze(question, *catalog_, *analyzer_, ao);
        analysis_time = Clock::now() - t0;
        auto po = config_.planner;
        po.precise_mode = precise;
        trace.plan = make_plan(trace.analysis->analysis, config_.env, po);
        trace.result = execute(*trace.plan, question, handles);
        break;
      }
      case EngineMode::kStdRag:
        trace.plan = std_rag_plan(precise);
        trace.result = execute(*trace.plan, question, handles);
        break;
      case EngineMode::kLongContext:
        trace.result = run_long_context(question, handles);
        break;
    }
  } catch (const ExecutionError& e) {
    trace.result = e.partial();
    trace.error = e.what();
  } catch (const Error& e) {
    trace.error = e.what();
  }
  if (trace.analysis) {
    trace.result.stage_latencies["analysis"] += std::chrono::duration_cast<std::chrono::nanoseconds>(analysis_time);
  }
  if (trace.error) {
    auto what = *trace.error;
    throw QueryTraceError(what, std::move(trace));
  }
  return trace;
}

// Serialization

void to_json(json& j, const TaskAnalysis& a) {
  j = json{{"task_type", to_string(a.task_type)},
           {"info_pattern", to_string(a.info_pattern)},
           {"evidence_present", a.evidence_present},
           {"backend", a.backend_id},
           {"raw_output", a.raw_output}};
}

void to_json(json& j, const AnalysisOutcome& o) {
  std::vector<std::uint32_t> ids;
  for (auto id : o.context_ids) ids.push_back(to_underlying(id));
  j = json{{"verdicts", o.analysis}, {"fallback", o.fallback},     {"attempts", o.attempts},
           {"granularity", o.granularity}, {"context_chunks", ids}, {"exchanges", o.exchanges}};
  if (!o.failure.empty()) j["failure"] = o.failure;
}

void to_json(json& j, const ExecutionPlan& p) {
  j = json{{"pipeline", to_string(p.pipeline)},
           {"retrieval",
            {{"granularity", p.retrieval.granularity},
             {"top_k", p.retrieval.top_k},
             {"weights", {p.retrieval.weights.exact(), p.retrieval.weights.semantic()}},
             {"threshold", p.retrieval.threshold},
             {"fusion_pool", p.retrieval.fusion_pool}}},
           {"generation",
            {{"precise_mode", p.generation.precise_mode},
             {"max_reasoning_steps", p.generation.max_reasoning_steps},
             {"unanswerable_token", p.generation.unanswerable_token}}}};
}

void to_json(json& j, const ChatExchange& e) {
  json request = json::array();
  for (const auto& m : e.request) request.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j = json{{"backend", e.backend_id},
           {"request", request},
           {"response", e.response_text},
           {"prompt_tokens", e.prompt_tokens},
           {"completion_tokens", e.completion_tokens},
           {"usage_reported", e.usage_reported},
           {"latency_ms", std::chrono::duration<double, std::milli>(e.latency).count()}};
}

void to_json(json& j, const ContextBlock& b) {
  std::vector<std::uint32_t> ids;
  for (auto id : b.provenance) ids.push_back(to_underlying(id));
  j = json{{"doc_id", b.doc_id},
           {"first_ordinal", b.first_ordinal},
           {"last_ordinal", b.last_ordinal},
           {"chunks", ids},
           {"text", b.text}};
}

void to_json(json& j, const StepTrace& s) {
  j = json{{"step", s.step_index},
           {"query", s.query_used},
           {"evidence", s.evidence_extracted},
           {"next_query", s.next_query ? json(*s.next_query) : json(nullptr)},
           {"answer", s.terminal_answer ? json(*s.terminal_answer) : json(nullptr)},
           {"unparseable", s.unparseable}};
}

void to_json(json& j, const QueryResult& r) {
  json latencies = json::object();
  for (const auto& [stage, ns] : r.stage_latencies) {
    latencies[stage] = std::chrono::duration<double, std::milli>(ns).count();
  }
  j = json{{"answer", r.answer},
           {"pipeline", to_string(r.pipeline)},
           {"steps", r.steps},
           {"sub_queries", r.sub_queries},
           {"context", r.context_blocks},
           {"exchanges", r.usage},
           {"cost", weighted_cost(r.usage)},
           {"weighted_cost", r.weighted_cost},
           {"latency_ms", latencies},
           {"fallback_taken", r.fallback_taken ? json(to_string(*r.fallback_taken)) : json(nullptr)},
           {"long_context_truncated", r.long_context_truncated},
           {"latency_exceeded", r.latency_exceeded},
           {"notes", r.notes}};
}

void to_json(json& j, const QueryTrace& t) {
  j = json{{"mode", to_string(t.mode)}, {"question", t.question}, {"answer", t.result.answer}};
  j["analysis"] = t.analysis ? json(*t.analysis) : json(nullptr);
  j["plan"] = t.plan ? json(*t.plan) : json(nullptr);
  j["result"] = t.result;
  if (t.error) j["error"] = *t.error;
}

// Benchmark harness

std::vector<BenchItem> load_dataset(std::istream& in) {
  std::vector<BenchItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto row = json::parse(line);
      BenchItem item;
      if (row.contains("id")) {
        item.id = row["id"].is_string() ? row["id"].get<std::string>() : row["id"].dump();
      } else {
        item.id = std::to_string(items.size());
      }
      item.question = row.at("question").get<std::string>();
      const auto& answers = row.at("answers");
      if (answers.is_string()) {
        item.answers.push_back(answers.get<std::string>());
      } else {
        for (const auto& a : answers) item.answers.push_back(a.is_string() ? a.get<std::string>() : a.dump());
      }
      if (item.answers.empty()) throw IngestError("record has no gold answers", line_no);
      if (row.contains("metric")) {
        auto m = parse_metric(row["metric"].get<std::string>());
        if (!m) throw IngestError("unknown metric '" + row["metric"].get<std::string>() + "'", line_no);
        item.metric = *m;
      }
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw IngestError(std::string("malformed dataset record: ") + e.what(), line_no);
    }
  }
  return items;
}

std::vector<BenchItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read dataset " + path.string());
  return load_dataset(in);
}

EvalRecord evaluate(const BenchItem& item, const QueryTrace& trace) {
  EvalRecord r;
  r.query_id = item.id;
  r.prediction = trace.result.answer;
  r.golds = item.answers;
  r.metric = item.metric;
  r.error = trace.error;
  r.score = r.error ? 0.0 : score_answer(item.metric, r.prediction, item.answers);
  r.cost = weighted_cost(trace.result.usage);
  r.cost.per_stage_latency = trace.result.stage_latencies;
  r.pipeline = r.error ? std::string() : std::string(to_string(trace.result.pipeline));
  for (const auto& [stage, ns] : trace.result.stage_latencies) {
    if (stage == "generation") {
      r.generation_latency += ns;
    } else {
      r.context_latency += ns;
    }
  }
  return r;
}

std::vector<EvalRecord> run_benchmark(Engine& engine, std::span<const BenchItem> items, const QueryOptions& options,
                                      std::size_t parallelism) {
  std::vector<EvalRecord> records(items.size());
  auto run_one = [&](std::size_t i) {
    QueryTrace trace;
    try {
      trace = engine.answer(items[i].question, options);
    } catch (const QueryTraceError& e) {
      trace = e.trace();
    } catch (const std::exception& e) {
      trace.error = e.what();
    }
    records[i] = evaluate(items[i], trace);
  };

  parallelism = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(1, items.size()));
  if (parallelism == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) run_one(i);
    return records;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < parallelism; ++w) {
      workers.emplace_back([&] {
        for (auto i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) run_one(i);
      });
    }
  }
  return records;
}

}  // namespace okra

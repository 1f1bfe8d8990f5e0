#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "okra/config.hpp"
#include "okra/engine.hpp"
#include "okra/errors.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct Flags {
  std::string config;
  std::string corpus;
  std::string index_dir;
  std::string mock_script;
  std::string mode;
  bool precise = false;
  bool trace = false;
  bool build = false;
  std::string report;
  std::string question;
  std::string dataset;
  std::size_t parallelism = 0;
};

okra::EngineConfig effective_config(const Flags& f) {
  okra::EngineConfig c = f.config.empty() ? okra::EngineConfig{} : okra::load_config(f.config);
  if (!f.corpus.empty()) c.corpus_path = f.corpus;
  if (!f.index_dir.empty()) c.index_dir = f.index_dir;
  if (!f.mock_script.empty()) {
    c.gateway.backend = "mock";
    c.gateway.mock_script = f.mock_script;
  }
  if (!f.mode.empty()) c.mode = *okra::parse_engine_mode(f.mode);
  if (f.precise) c.planner.precise_mode = true;
  if (f.parallelism > 0) c.bench_parallelism = f.parallelism;
  return c;
}

int cmd_index(const Flags& f) {
  auto config = effective_config(f);
  if (config.corpus_path.empty()) throw okra::ConfigError("index: no corpus given (corpus.path or --corpus)");
  if (config.index_dir.empty()) throw okra::ConfigError("index: no index directory given (index.dir or --index-dir)");
  okra::Engine engine(config);
  auto report = engine.build_indexes();
  for (const auto& e : report.entries) {
    std::cout << "granularity " << e.granularity << ": " << e.chunks << " chunks\n";
  }
  std::cout << (report.up_to_date ? "up-to-date" : "built") << " " << config.index_dir.string() << "\n";
  return kOk;
}

int cmd_query(const Flags& f) {
  auto config = effective_config(f);
  if (!config.index_dir.empty() && !okra::read_manifest(config.index_dir) && !f.build) {
    throw okra::IndexError("no index in " + config.index_dir.string() + "; run `okra index` or pass --build");
  }
  okra::Engine engine(config);
  if (f.build) engine.build_indexes();

  okra::QueryOptions options;
  options.mode = config.mode;
  options.precise = config.planner.precise_mode;

  auto emit = [&](const okra::QueryTrace& trace) {
    nlohmann::json j = trace;
    j["config"] = config;
    std::cout << j.dump(2) << "\n";
  };
  try {
    auto trace = engine.answer(f.question, options);
    if (f.trace) {
      emit(trace);
    } else {
      std::cout << trace.result.answer << "\n";
    }
  } catch (const okra::QueryTraceError& e) {
    std::cerr << "okra: query failed: " << e.what() << "\n";
    emit(e.trace());
    return kRuntime;
  }
  return kOk;
}

int cmd_bench(const Flags& f) {
  auto config = effective_config(f);
  auto items = okra::load_dataset(f.dataset);
  okra::Engine engine(config);

  okra::QueryOptions options;
  options.mode = config.mode;
  options.precise = config.planner.precise_mode;
  auto records = okra::run_benchmark(engine, items, options, config.bench_parallelism);
  auto summary = okra::aggregate_report(records);

  std::cout << okra::format_summary_line(summary) << "\n";
  if (!f.report.empty()) {
    nlohmann::json report{{"mode", okra::to_string(config.mode)},
                          {"summary", summary},
                          {"records", records},
                          {"config", config}};
    std::ofstream out(f.report);
    if (!out) throw okra::Error("cannot write report " + f.report);
    out << report.dump(2) << "\n";
  }
  if (!records.empty() && summary.failures == records.size()) {
    std::cerr << "okra: every record failed\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"okra: analyzer-planned retrieval for long-text question answering"};
  app.require_subcommand(1);
  Flags f;

  app.add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--corpus", f.corpus, "Corpus file (JSON lines)");
  app.add_option("--index-dir", f.index_dir, "Index directory");
  app.add_option("--mock-script", f.mock_script, "Scripted generation backend (JSON lines)");
  app.add_option("--mode", f.mode, "okra | std-rag | long-context")
      ->check(CLI::IsMember({"okra", "std-rag", "long-context"}));
  app.add_flag("--precise", f.precise, "Retry unanswerable answers over the long context");
  app.add_flag("--trace", f.trace, "Print the full query trace as JSON");
  app.add_option("--report", f.report, "Benchmark report output path");
  app.add_option("--parallelism", f.parallelism, "Benchmark query parallelism");

  auto* index = app.add_subcommand("index", "Build and persist retrieval indexes");
  index->fallthrough();

  auto* query = app.add_subcommand("query", "Answer one question");
  query->fallthrough();
  query->add_option("question", f.question, "Question text")->required();
  query->add_flag("--build", f.build, "Build indexes if none are persisted");

  auto* bench = app.add_subcommand("bench", "Run a benchmark dataset");
  bench->fallthrough();
  bench->add_option("dataset", f.dataset, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*index) return cmd_index(f);
    if (*query) return cmd_query(f);
    if (*bench) return cmd_bench(f);
  } catch (const okra::ConfigError& e) {
    std::cerr << "okra: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "okra: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

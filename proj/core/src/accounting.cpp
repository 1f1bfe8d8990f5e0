#include "okra/accounting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace okra {

using nlohmann::json;

CostReport weighted_cost(std::span<const ChatExchange> exchanges) {
  CostReport r;
  for (const auto& ex : exchanges) {
    r.input_tokens += ex.prompt_tokens;
    r.output_tokens += ex.completion_tokens;
  }
  r.num_llm_calls = exchanges.size();
  r.weighted_cost = weigh(r.input_tokens, r.output_tokens);
  return r;
}

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

bool starts_with_at(std::string_view s, std::size_t i, std::string_view prefix) {
  return s.substr(i, prefix.size()) == prefix;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (unsigned char c : text) {
    if (c < 0x80 && std::ispunct(c)) continue;
    stripped += static_cast<char>(std::tolower(c));
  }
  std::string out;
  for (const auto& w : split_ws(stripped)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

double f1_score(std::string_view prediction, std::span<const std::string> golds) {
  auto pred = split_ws(normalize_answer(prediction));
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_single(pred, split_ws(normalize_answer(g))));
  return best;
}

std::optional<double> parse_numeric_answer(std::string_view text) {
  static constexpr std::string_view kCurrency[] = {"$", "\xE2\x82\xAC", "\xC2\xA3", "\xC2\xA5"};  // $ € £ ¥
  std::string cleaned;
  for (std::size_t i = 0; i < text.size();) {
    bool skipped = false;
    for (auto sym : kCurrency) {
      if (starts_with_at(text, i, sym)) {
        i += sym.size();
        skipped = true;
        break;
      }
    }
    if (skipped) continue;
    char c = text[i];
    bool thousands = c == ',' && i > 0 && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                     std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (c != '%' && !thousands) cleaned += c;
    ++i;
  }
  auto b = cleaned.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return std::nullopt;
  std::size_t i = b;
  std::size_t start = i;
  if (cleaned[i] == '-' || cleaned[i] == '+') ++i;
  std::size_t digits = 0;
  while (i < cleaned.size() && std::isdigit(static_cast<unsigned char>(cleaned[i]))) ++i, ++digits;
  if (i < cleaned.size() && cleaned[i] == '.') {
    ++i;
    while (i < cleaned.size() && std::isdigit(static_cast<unsigned char>(cleaned[i]))) ++i, ++digits;
  }
  if (digits == 0) return std::nullopt;
  auto rest = cleaned.find_first_not_of(" \t\r\n.", i);
  if (rest != std::string::npos) return std::nullopt;
  try {
    return std::stod(cleaned.substr(start, i - start));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

double em_score(std::string_view prediction, std::span<const std::string> golds) {
  auto pred_num = parse_numeric_answer(prediction);
  auto pred_norm = normalize_answer(prediction);
  for (const auto& g : golds) {
    auto gold_num = parse_numeric_answer(g);
    if (pred_num && gold_num) {
      double a = *pred_num;
      double b = *gold_num;
      double scale = std::max(std::fabs(a), std::fabs(b));
      if (std::fabs(a - b) <= 1e-4 * scale) return 1.0;
      continue;
    }
    if (pred_norm == normalize_answer(g)) return 1.0;
  }
  return 0.0;
}

std::string_view to_string(Metric metric) { return metric == Metric::kEm ? "em" : "f1"; }

std::optional<Metric> parse_metric(std::string_view text) {
  if (text == "em") return Metric::kEm;
  if (text == "f1") return Metric::kF1;
  return std::nullopt;
}

double score_answer(Metric metric, std::string_view prediction, std::span<const std::string> golds) {
  return metric == Metric::kEm ? em_score(prediction, golds) : f1_score(prediction, golds);
}

BenchmarkSummary aggregate_report(std::span<const EvalRecord> records) {
  BenchmarkSummary s;
  s.count = records.size();
  s.zero_count = records.empty();
  if (records.empty()) return s;

  double score = 0.0;
  double cost = 0.0;
  double ctx = 0.0;
  double gen = 0.0;
  std::map<std::string, std::pair<double, double>> sums;
  for (const auto& r : records) {
    if (r.error) ++s.failures;
    score += r.score;
    cost += r.cost.weighted_cost;
    ctx += std::chrono::duration<double>(r.context_latency).count();
    gen += std::chrono::duration<double>(r.generation_latency).count();
    auto key = r.pipeline.empty() ? std::string("failed") : r.pipeline;
    auto& b = s.per_pipeline[key];
    ++b.count;
    sums[key].first += r.score;
    sums[key].second += r.cost.weighted_cost;
  }
  const double n = static_cast<double>(records.size());
  s.score = score / n * 100.0;
  s.cost = cost / n / 1e3;
  s.context_seconds = ctx / n;
  s.generation_seconds = gen / n;
  s.latency_seconds = s.context_seconds + s.generation_seconds;
  for (auto& [key, b] : s.per_pipeline) {
    b.score = sums[key].first / static_cast<double>(b.count) * 100.0;
    b.cost = sums[key].second / static_cast<double>(b.count) / 1e3;
  }
  return s;
}

std::string format_summary_line(const BenchmarkSummary& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "score %.1f | cost %.1f (x10^3 tokens) | latency %.2fs (context %.2fs, generation %.2fs) | n=%zu "
                "failures=%zu",
                s.score, s.cost, s.latency_seconds, s.context_seconds, s.generation_seconds, s.count, s.failures);
  return buf;
}

void to_json(json& j, const CostReport& r) {
  json stages = json::object();
  for (const auto& [name, d] : r.per_stage_latency) stages[name] = std::chrono::duration<double>(d).count();
  j = json{{"input_tokens", r.input_tokens},
           {"output_tokens", r.output_tokens},
           {"weighted_cost", r.weighted_cost},
           {"num_llm_calls", r.num_llm_calls},
           {"per_stage_latency_s", stages}};
}

void to_json(json& j, const EvalRecord& r) {
  j = json{{"id", r.query_id},
           {"prediction", r.prediction},
           {"answers", r.golds},
           {"metric", to_string(r.metric)},
           {"score", r.score},
           {"cost", r.cost},
           {"pipeline", r.pipeline},
           {"context_latency_s", std::chrono::duration<double>(r.context_latency).count()},
           {"generation_latency_s", std::chrono::duration<double>(r.generation_latency).count()}};
  if (r.error) j["error"] = *r.error;
}

void to_json(json& j, const BenchmarkSummary& s) {
  json per = json::object();
  for (const auto& [k, b] : s.per_pipeline) per[k] = {{"count", b.count}, {"score", b.score}, {"cost_k", b.cost}};
  j = json{{"count", s.count},
           {"failures", s.failures},
           {"zero_count", s.zero_count},
           {"score", s.score},
           {"cost_k", s.cost},
           {"latency_s", s.latency_seconds},
           {"context_processing_s", s.context_seconds},
           {"generation_s", s.generation_seconds},
           {"per_pipeline", per}};
}

}  // namespace okra

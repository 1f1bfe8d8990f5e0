#include "okra/executor.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "okra/errors.hpp"

namespace okra {

const std::string_view kQaSystemPrompt =
    "Answer the question based only on the given context. If the context lacks the needed evidence, respond "
    "exactly: unanswerable.";

const std::string_view kSplitSystemPrompt =
    "Given a question, and this question may need the information from multiple sources.\n"
    "Please split this question into multiple sub-questions, each of which can be answered by a single source. "
    "The final answer should be several sub-questions separated by the line-breaker.";

const std::string_view kStepSystemPrompt =
    "Given a question, which may need multiple steps to get the final answer. Please first get the existing "
    "evidence for the question based on the given context, and then generate a next-step query to query "
    "additional information. If the question can already be totally answered, you should output '### Answer: "
    "The answer is: <answer>' at the end. Otherwise, output 'None'. The answer should be based only on the "
    "context.";

namespace {

constexpr std::string_view kSplitDemoQuestion =
    "Which university has the larger campus, University of New Haven or University of West Florida?";
constexpr std::string_view kSplitDemoAnswer =
    "What is the campus size of University of New Haven?\nWhat is the campus size of University of West Florida?";
constexpr std::string_view kStepDemoUser =
    "### Context: 100 Rifles is directed by Tom Gries and starring Jim Brown and Raquel Welch. ### Question: 100 "
    "Rifles is a western film, starring an actress of what nationality?";
constexpr std::string_view kStepDemoAssistant =
    "### Evidence: The main actress in 100 Rifles is Raquel Welch. ### Next-Query: What is the nationality of "
    "Raquel Welch? ### Answer: None";

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct LineTable {
  std::vector<std::size_t> starts;
  std::vector<std::size_t> ends;  // excluding '\n'

  explicit LineTable(std::string_view text) {
    std::size_t pos = 0;
    while (true) {
      starts.push_back(pos);
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) {
        ends.push_back(text.size());
        break;
      }
      ends.push_back(nl);
      pos = nl + 1;
    }
  }

  std::size_t line_of(std::size_t offset) const {
    auto it = std::upper_bound(starts.begin(), starts.end(), offset);
    return static_cast<std::size_t>(it - starts.begin()) - 1;
  }
  std::size_t size() const { return starts.size(); }
};

using Clock = std::chrono::steady_clock;

// Accumulates the trace of one query across pipeline stages.
class Session {
 public:
  explicit Session(EngineHandles& h) : h_(h) {}

  QueryResult& result() { return r_; }
  EngineHandles& handles() { return h_; }

  template <typename F>
  auto guarded(F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const RetrievalError& e) {
      throw ExecutionError(std::string("retrieval failed: ") + e.what(), finalize());
    }
  }

  std::shared_ptr<const GranularityIndex> index(std::size_t granularity) {
    if (h_.catalog.has(granularity)) return h_.catalog.at(granularity);
    auto t0 = Clock::now();
    auto gi = guarded([&] { return h_.catalog.at(granularity); });
    r_.stage_latencies["indexing"] += Clock::now() - t0;
    return gi;
  }

  RankedContext retrieve(std::string_view query, const RetrievalConfig& cfg) {
    index(cfg.granularity);
    auto t0 = Clock::now();
    auto ranked = guarded([&] { return h_.catalog.retrieve(query, cfg.request()); });
    r_.stage_latencies["retrieval"] += Clock::now() - t0;
    return ranked;
  }

  template <typename F>
  auto timed_context(F&& f) {
    auto t0 = Clock::now();
    auto out = f();
    r_.stage_latencies["retrieval"] += Clock::now() - t0;
    return out;
  }

  std::string generate(std::vector<ChatMessage> messages) {
    auto t0 = Clock::now();
    ChatExchange ex;
    try {
      ex = h_.chat.complete(messages, h_.params);
    } catch (const GatewayError& e) {
      r_.stage_latencies["generation"] += Clock::now() - t0;
      throw ExecutionError(std::string("generation failed: ") + e.what(), finalize());
    }
    r_.stage_latencies["generation"] += Clock::now() - t0;
    std::string text = ex.response_text;
    r_.usage.push_back(std::move(ex));
    if (h_.env.budget_weighted_tokens) {
      double spent = weighted_cost(r_.usage).weighted_cost;
      if (spent > *h_.env.budget_weighted_tokens) {
        r_.notes.push_back("budget exceeded");
        throw BudgetExceeded("weighted token budget exceeded (" + std::to_string(spent) + " > " +
                                 std::to_string(*h_.env.budget_weighted_tokens) + ")",
                             finalize());
      }
    }
    return text;
  }

  QueryResult finalize() {
    r_.weighted_cost = weighted_cost(r_.usage).weighted_cost;
    if (h_.env.latency_threshold) {
      std::chrono::nanoseconds total{0};
      for (const auto& [_, d] : r_.stage_latencies) total += d;
      r_.latency_exceeded = total > *h_.env.latency_threshold;
    }
    return r_;
  }

 private:
  EngineHandles& h_;
  QueryResult r_;
};

std::vector<ChunkId> ids_of(const RankedContext& ranked) {
  std::vector<ChunkId> ids;
  ids.reserve(ranked.entries.size());
  for (const auto& e : ranked.entries) ids.push_back(e.id);
  return ids;
}

void answer_from_context(Session& s, std::string_view query, std::vector<ContextBlock> blocks,
                         std::string_view preface = {}) {
  std::string context(preface);
  auto rendered = render_context(blocks);
  if (!context.empty() && !rendered.empty()) context += "\n\n";
  context += rendered;
  s.result().context_blocks = std::move(blocks);
  s.result().answer = std::string(trim(s.generate(build_qa_messages(query, context))));
}

void direct_in(Session& s, const ExecutionPlan& plan, std::string_view query, std::size_t radius, bool tables) {
  auto ranked = s.retrieve(query, plan.retrieval);
  auto gi = s.index(plan.retrieval.granularity);
  auto blocks = s.timed_context([&] {
    return process_context(*gi->chunks, s.handles().catalog.corpus(), ranked, radius, tables);
  });
  answer_from_context(s, query, std::move(blocks));
}

void long_context_in(Session& s, std::string_view query) {
  auto& h = s.handles();
  const auto& corpus = h.catalog.corpus();
  const auto& tokenizer = h.catalog.tokenizer();
  const auto& lc = h.long_context;
  auto gi = s.index(lc.granularity);

  std::size_t total = 0;
  for (const auto& doc : corpus.documents()) total += tokenizer.count(doc.text);

  std::vector<ChunkId> selected;
  if (total <= lc.token_limit) {
    for (const auto& c : gi->chunks->chunks()) selected.push_back(c.id);
  } else {
    auto t0 = Clock::now();
    std::vector<ScoredChunk> top;
    try {
      top = h.catalog.retrieve_semantic(query, lc.granularity, lc.top_k);
    } catch (const RetrievalError& e) {
      throw ExecutionError(std::string("retrieval failed: ") + e.what(), s.finalize());
    }
    s.result().stage_latencies["retrieval"] += Clock::now() - t0;
    for (const auto& sc : top) selected.push_back(sc.id);
    s.result().long_context_truncated = true;
    s.result().notes.push_back("corpus of " + std::to_string(total) + " tokens exceeds limit " +
                               std::to_string(lc.token_limit) + "; using top " + std::to_string(selected.size()) +
                               " chunks");
  }
  auto blocks = s.timed_context([&] { return process_context(*gi->chunks, corpus, selected, 0, false); });
  answer_from_context(s, query, std::move(blocks));
}

void split_aggregate_in(Session& s, const ExecutionPlan& plan, std::string_view query) {
  auto raw = s.generate(build_split_messages(query));
  auto subs = parse_sub_queries(raw);
  if (subs.empty()) {
    s.result().notes.push_back("empty split output; degraded to direct");
    s.result().pipeline = PipelineKind::kDirect;
    direct_in(s, plan, query, 0, false);
    return;
  }
  s.result().sub_queries = subs;

  std::vector<ChunkId> selected;
  for (const auto& sub : subs) {
    auto ranked = s.retrieve(sub, plan.retrieval);
    for (const auto& e : ranked.entries) {
      if (std::find(selected.begin(), selected.end(), e.id) == selected.end()) selected.push_back(e.id);
    }
  }
  auto gi = s.index(plan.retrieval.granularity);
  auto blocks =
      s.timed_context([&] { return process_context(*gi->chunks, s.handles().catalog.corpus(), selected, 0, false); });
  answer_from_context(s, query, std::move(blocks));
}

void step_wise_in(Session& s, const ExecutionPlan& plan, std::string_view query) {
  std::vector<std::string> evidence;
  std::vector<ContextBlock> last_blocks;
  std::string current(query);
  auto gi = s.index(plan.retrieval.granularity);

  auto joined_evidence = [&] {
    std::string out;
    for (const auto& e : evidence) {
      if (!out.empty()) out += ' ';
      out += e;
    }
    return out;
  };

  for (std::size_t step = 0; step < plan.generation.max_reasoning_steps; ++step) {
    auto ranked = s.retrieve(current, plan.retrieval);
    auto blocks = s.timed_context(
        [&] { return process_context(*gi->chunks, s.handles().catalog.corpus(), ranked, 0, false); });
    std::string context = joined_evidence();
    auto rendered = render_context(blocks);
    if (!context.empty() && !rendered.empty()) context += "\n\n";
    context += rendered;

    auto raw = s.generate(build_step_messages(query, context));
    auto parsed = parse_step_output(raw);

    StepTrace t;
    t.step_index = step;
    t.query_used = current;
    t.evidence_extracted = parsed.evidence;
    if (!parsed.parsed) {
      t.unparseable = true;
      t.terminal_answer = std::string(trim(raw));
      s.result().notes.push_back("unparseable step output treated as terminal");
    } else if (parsed.answer) {
      t.terminal_answer = parsed.answer;
    } else {
      std::string next = parsed.next_query && !parsed.next_query->empty() ? *parsed.next_query : current;
      t.next_query = next;
      if (!parsed.evidence.empty()) evidence.push_back(parsed.evidence);
      current = next;
    }
    s.result().steps.push_back(t);
    if (t.terminal_answer) {
      s.result().answer = *t.terminal_answer;
      s.result().context_blocks = std::move(blocks);
      return;
    }
    last_blocks = std::move(blocks);
  }

  s.result().notes.push_back("step cap reached; final generation over accumulated evidence");
  answer_from_context(s, query, std::move(last_blocks), joined_evidence());
}

void dispatch_in(Session& s, const ExecutionPlan& plan, std::string_view query) {
  s.result().pipeline = plan.pipeline;
  switch (plan.pipeline) {
    case PipelineKind::kDirect:
      direct_in(s, plan, query, 0, false);
      break;
    case PipelineKind::kSplitAggregate:
      split_aggregate_in(s, plan, query);
      break;
    case PipelineKind::kStepWise:
      step_wise_in(s, plan, query);
      break;
    case PipelineKind::kContextExtension:
      direct_in(s, plan, query, 1, true);
      break;
    case PipelineKind::kLongContext:
      long_context_in(s, query);
      if (s.result().long_context_truncated) s.result().fallback_taken = FallbackKind::kLongContext;
      break;
  }
}

void require(const ExecutionPlan& plan, PipelineKind kind) {
  if (plan.pipeline != kind) {
    throw Error("plan pipeline is " + std::string(to_string(plan.pipeline)) + ", expected " +
                std::string(to_string(kind)));
  }
}

}  // namespace

std::string_view to_string(FallbackKind kind) { return kind == FallbackKind::kPrecise ? "precise" : "long_context"; }

bool is_table_line(std::string_view line) {
  line = trim(line);
  std::size_t separators = 0;
  for (std::size_t i = 0; i < line.size();) {
    char c = line[i];
    if (c == '|' || c == '\t') {
      ++separators;
      ++i;
    } else if (c == ' ' && i + 1 < line.size() && line[i + 1] == ' ') {
      ++separators;
      while (i < line.size() && line[i] == ' ') ++i;
    } else {
      ++i;
    }
  }
  return separators >= 2;
}

CharSpan recover_table(const Document& doc, CharSpan span) {
  std::string_view text = doc.text;
  if (text.empty() || span.begin >= text.size() || span.empty()) return span;
  span.end = std::min(span.end, text.size());
  LineTable lines(text);
  auto line_text = [&](std::size_t l) { return text.substr(lines.starts[l], lines.ends[l] - lines.starts[l]); };

  CharSpan out = span;
  std::size_t first = lines.line_of(span.begin);
  std::size_t last = lines.line_of(span.end - 1);

  if (is_table_line(line_text(first))) {
    std::size_t top = first;
    while (top > 0 && is_table_line(line_text(top - 1))) --top;
    for (int extra = 0; extra < 2 && top > 0; ++extra) {
      auto above = line_text(top - 1);
      if (trim(above).empty() || is_table_line(above)) break;
      --top;
    }
    out.begin = std::min(out.begin, lines.starts[top]);
  }
  if (is_table_line(line_text(last))) {
    std::size_t bottom = last;
    while (bottom + 1 < lines.size() && is_table_line(line_text(bottom + 1))) ++bottom;
    out.end = std::max(out.end, lines.ends[bottom]);
  }
  return out;
}

std::vector<ContextBlock> process_context(const ChunkIndex& index, const Corpus& corpus,
                                          std::span<const ChunkId> selected, std::size_t extend_radius,
                                          bool recover_tables) {
  // Index positions are contiguous per document, so ranges are kept as
  // [lo, hi] chunk positions and grouped by document position.
  std::map<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>> by_doc;
  for (ChunkId id : selected) {
    auto span = index.neighbors(id, extend_radius);
    std::size_t lo = to_underlying(span.front().id);
    std::size_t hi = to_underlying(span.back().id);
    const Chunk& c = index.chunk(id);
    if (recover_tables) {
      const auto& doc = corpus.at(c.doc_position);
      auto doc_chunks = index.document_chunks(c.doc_id);
      std::size_t doc_lo = to_underlying(doc_chunks.front().id);
      std::size_t doc_hi = to_underlying(doc_chunks.back().id);
      CharSpan chars{index.chunk(ChunkId{static_cast<std::uint32_t>(lo)}).char_span.begin,
                     index.chunk(ChunkId{static_cast<std::uint32_t>(hi)}).char_span.end};
      auto grown = recover_table(doc, chars);
      while (lo > doc_lo && index.chunk(ChunkId{static_cast<std::uint32_t>(lo)}).char_span.begin > grown.begin) --lo;
      while (hi < doc_hi && index.chunk(ChunkId{static_cast<std::uint32_t>(hi)}).char_span.end < grown.end) ++hi;
    }
    by_doc[c.doc_position].emplace_back(lo, hi);
  }

  std::vector<ContextBlock> blocks;
  for (auto& [doc_pos, ranges] : by_doc) {
    std::sort(ranges.begin(), ranges.end());
    std::vector<std::pair<std::size_t, std::size_t>> merged;
    for (const auto& r : ranges) {
      if (!merged.empty() && r.first <= merged.back().second + 1) {
        merged.back().second = std::max(merged.back().second, r.second);
      } else {
        merged.push_back(r);
      }
    }
    const auto& doc = corpus.at(doc_pos);
    for (const auto& [lo, hi] : merged) {
      const Chunk& a = index.chunk(ChunkId{static_cast<std::uint32_t>(lo)});
      const Chunk& b = index.chunk(ChunkId{static_cast<std::uint32_t>(hi)});
      ContextBlock block;
      block.doc_id = doc.id;
      block.doc_position = doc_pos;
      block.first_ordinal = a.ordinal;
      block.last_ordinal = b.ordinal;
      block.text = doc.text.substr(a.char_span.begin, b.char_span.end - a.char_span.begin);
      for (std::size_t p = lo; p <= hi; ++p) block.provenance.push_back(ChunkId{static_cast<std::uint32_t>(p)});
      blocks.push_back(std::move(block));
    }
  }
  return blocks;
}

std::vector<ContextBlock> process_context(const ChunkIndex& index, const Corpus& corpus, const RankedContext& ranked,
                                          std::size_t extend_radius, bool recover_tables) {
  auto ids = ids_of(ranked);
  return process_context(index, corpus, ids, extend_radius, recover_tables);
}

std::string render_context(std::span<const ContextBlock> blocks) {
  std::string out;
  for (const auto& b : blocks) {
    auto t = trim(b.text);
    if (t.empty()) continue;
    if (!out.empty()) out += "\n\n";
    out += t;
  }
  return out;
}

std::vector<ChatMessage> build_qa_messages(std::string_view question, std::string_view context) {
  return {{Role::kSystem, std::string(kQaSystemPrompt)},
          {Role::kUser, "### Context: " + std::string(context) + " ### Question: " + std::string(question) +
                            " ### Answer:"}};
}

std::vector<ChatMessage> build_split_messages(std::string_view question) {
  return {{Role::kSystem, std::string(kSplitSystemPrompt)},
          {Role::kUser, std::string(kSplitDemoQuestion)},
          {Role::kAssistant, std::string(kSplitDemoAnswer)},
          {Role::kUser, std::string(question)}};
}

std::vector<ChatMessage> build_step_messages(std::string_view question, std::string_view context) {
  return {{Role::kSystem, std::string(kStepSystemPrompt)},
          {Role::kUser, std::string(kStepDemoUser)},
          {Role::kAssistant, std::string(kStepDemoAssistant)},
          {Role::kUser, "### Context: " + std::string(context) + " ### Question:" + std::string(question)}};
}

std::vector<std::string> parse_sub_queries(std::string_view text, std::size_t cap) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size() && out.size() < cap) {
    auto nl = text.find('\n', pos);
    auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    // Strip "-", "*", "1." and "1)" list markers.
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = trim(line.substr(1));
    } else {
      std::size_t d = 0;
      while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
      if (d > 0 && d < line.size() && (line[d] == '.' || line[d] == ')')) line = trim(line.substr(d + 1));
    }
    if (!line.empty()) out.emplace_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

std::string extract_answer(std::string_view field) {
  static constexpr std::string_view kLead = "the answer is:";
  auto l = lower(field);
  auto at = l.find(kLead);
  if (at != std::string::npos) field = field.substr(at + kLead.size());
  return std::string(trim(field));
}

StepOutput parse_step_output(std::string_view text) {
  static constexpr std::string_view kEvidence = "### evidence:";
  static constexpr std::string_view kNext = "### next-query:";
  static constexpr std::string_view kAnswer = "### answer:";
  auto l = lower(text);

  auto field = [&](std::string_view marker) -> std::optional<std::string_view> {
    auto at = l.find(marker);
    if (at == std::string::npos) return std::nullopt;
    auto begin = at + marker.size();
    auto end = l.find("###", begin);
    return trim(text.substr(begin, end == std::string::npos ? std::string_view::npos : end - begin));
  };

  StepOutput out;
  auto evidence = field(kEvidence);
  auto next = field(kNext);
  auto answer = field(kAnswer);
  out.parsed = evidence || next || answer;
  if (evidence) out.evidence = std::string(*evidence);
  if (next) out.next_query = std::string(*next);
  if (answer) {
    auto a = extract_answer(*answer);
    auto norm = lower(a);
    while (!norm.empty() && (norm.back() == '.' || norm.back() == '\'' || norm.back() == '"')) norm.pop_back();
    while (!norm.empty() && (norm.front() == '\'' || norm.front() == '"')) norm.erase(norm.begin());
    if (!norm.empty() && norm != "none") out.answer = std::move(a);
  }
  return out;
}

bool mentions_unanswerable(std::string_view answer, std::string_view token) {
  return normalize_answer(answer).find(lower(token)) != std::string::npos;
}

QueryResult run_direct(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles) {
  require(plan, PipelineKind::kDirect);
  Session s(handles);
  s.result().pipeline = PipelineKind::kDirect;
  direct_in(s, plan, query, 0, false);
  return s.finalize();
}

QueryResult run_split_aggregate(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles) {
  require(plan, PipelineKind::kSplitAggregate);
  Session s(handles);
  s.result().pipeline = PipelineKind::kSplitAggregate;
  split_aggregate_in(s, plan, query);
  return s.finalize();
}

QueryResult run_step_wise(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles) {
  require(plan, PipelineKind::kStepWise);
  Session s(handles);
  s.result().pipeline = PipelineKind::kStepWise;
  step_wise_in(s, plan, query);
  return s.finalize();
}

QueryResult run_context_extension(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles) {
  require(plan, PipelineKind::kContextExtension);
  Session s(handles);
  s.result().pipeline = PipelineKind::kContextExtension;
  direct_in(s, plan, query, 1, true);
  return s.finalize();
}

QueryResult run_long_context(std::string_view query, EngineHandles& handles) {
  Session s(handles);
  s.result().pipeline = PipelineKind::kLongContext;
  long_context_in(s, query);
  if (s.result().long_context_truncated) s.result().fallback_taken = FallbackKind::kLongContext;
  return s.finalize();
}

QueryResult execute(const ExecutionPlan& plan, std::string_view query, EngineHandles& handles) {
  Session s(handles);
  dispatch_in(s, plan, query);
  if (plan.generation.precise_mode && mentions_unanswerable(s.result().answer, plan.generation.unanswerable_token)) {
    s.result().notes.push_back("precise mode: '" + s.result().answer + "' retried with long context");
    long_context_in(s, query);
    s.result().pipeline = PipelineKind::kLongContext;
    s.result().fallback_taken = FallbackKind::kPrecise;
  }
  return s.finalize();
}

}  // namespace okra

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "okra/analyzer.hpp"
#include "okra/errors.hpp"
#include "okra/planner.hpp"

using namespace okra;

namespace {

class ScriptedAnalyzer final : public AnalyzerBackend {
 public:
  explicit ScriptedAnalyzer(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string id() const override { return "scripted-analyzer"; }
  AnalyzerReply run(const AnalysisRequest& request) override {
    attempts.push_back(request.attempt);
    auto i = std::min(attempts.size() - 1, replies_.size() - 1);
    if (replies_[i] == "<throw>") throw GatewayError(GatewayError::Kind::kRetryExhausted, "down");
    return {replies_[i], std::nullopt};
  }
  std::vector<int> attempts;

 private:
  std::vector<std::string> replies_;
};

fixtures::Stack small_stack() {
  return fixtures::stack(fixtures::corpus({{"welch", "Raquel Welch starred in 100 Rifles, directed by Tom Gries."},
                                           {"gries", "Tom Gries was born in Chicago."}}));
}

}  // namespace

TEST(AnalysisEnums, RoundTripAndLenientParsing) {
  for (auto t : kAllTaskTypes) EXPECT_EQ(parse_task_type(to_string(t)), t);
  for (auto p : kAllInfoPatterns) EXPECT_EQ(parse_info_pattern(to_string(p)), p);
  EXPECT_EQ(parse_task_type("Multi_Bridge"), TaskType::kMultiBridge);
  EXPECT_EQ(parse_task_type("MULTI SOURCE"), TaskType::kMultiSource);
  EXPECT_FALSE(parse_task_type("numeric").has_value());
}

TEST(ParseAnalysis, AcceptsLiteralAndVariants) {
  struct Case {
    std::string raw;
    TaskType type;
    InfoPattern pattern;
    bool evidence;
  };
  const std::vector<Case> cases = {
      {R"({"question-type": "extractive", "info-type": "exact", "containing": "yes"})", TaskType::kExtractive,
       InfoPattern::kExact, true},
      {R"({"question-type": "Extractive", "info-type": "Exact", "containing": "Yes"})", TaskType::kExtractive,
       InfoPattern::kExact, true},
      {R"({"QUESTION-TYPE": "ABSTRACTIVE", "INFO-TYPE": "SEMANTIC", "CONTAINING": "NO"})", TaskType::kAbstractive,
       InfoPattern::kSemantic, false},
      {R"(Here is the analysis: {"question-type": "arithmetic", "info-type": "same", "containing": "no"})",
       TaskType::kArithmetic, InfoPattern::kSame, false},
      {"```json\n{\"question-type\": \"multi-bridge\", \"info-type\": \"semantic\", \"containing\": \"yes\"}\n```",
       TaskType::kMultiBridge, InfoPattern::kSemantic, true},
      {R"({'question-type': 'multi-source', 'info-type': 'exact', 'containing': 'no'})", TaskType::kMultiSource,
       InfoPattern::kExact, false},
      {R"({"question_type": "multi_source", "info_type": "same", "containing": "yes"})", TaskType::kMultiSource,
       InfoPattern::kSame, true},
      {R"({"question-type": "extractive", "info-type": "semantic", "containing": true})", TaskType::kExtractive,
       InfoPattern::kSemantic, true},
      {R"(  {"containing": "no", "info-type": "exact", "question-type": "abstractive"}  trailing words)",
       TaskType::kAbstractive, InfoPattern::kExact, false},
      {"Answer:\n{\n  \"question-type\" : \"arithmetic\",\n  \"info-type\" : \"exact\",\n  \"containing\" : \"Yes\"\n}.",
       TaskType::kArithmetic, InfoPattern::kExact, true},
      {R"({"Question-Type": "Multi-Bridge", "Info-Type": "Same", "Containing": "No"})", TaskType::kMultiBridge,
       InfoPattern::kSame, false},
  };
  for (const auto& c : cases) {
    auto a = parse_analysis(c.raw);
    EXPECT_EQ(a.task_type, c.type) << c.raw;
    EXPECT_EQ(a.info_pattern, c.pattern) << c.raw;
    EXPECT_EQ(a.evidence_present, c.evidence) << c.raw;
  }
}

TEST(ParseAnalysis, RejectsMalformed) {
  for (std::string raw : {
           std::string("extractive, exact, yes"),
           std::string(R"({"question-type": "extractive", "info-type": "exact"})"),
           std::string(R"({"question-type": "numeric", "info-type": "exact", "containing": "yes"})"),
           std::string(R"({"question-type": "extractive", "info-type": "fuzzy", "containing": "yes"})"),
           std::string(R"({"question-type": "extractive", "info-type": "exact", "containing": "maybe"})"),
           std::string(R"({"question-type": "extractive", "info-type": "exact", "containing": "yes")"),
           std::string("{not a mapping}"),
           std::string(""),
       }) {
    EXPECT_THROW(parse_analysis(raw), AnalysisParseError) << raw;
  }
}

TEST(ParseAnalysis, RenderRoundTrips) {
  for (auto t : kAllTaskTypes)
    for (auto p : kAllInfoPatterns)
      for (bool e : {true, false}) {
        TaskAnalysis a{t, p, e, "", ""};
        EXPECT_TRUE(same_verdicts(parse_analysis(render_analysis(a)), a));
      }
}

TEST(AnalysisPrompt, CarriesContextAndQuestion) {
  std::vector<std::string> ctx{"first chunk", "second chunk"};
  auto p = build_analysis_prompt("Who?", ctx);
  EXPECT_EQ(p.system, kAnalysisSystemPrompt);
  EXPECT_EQ(p.user, "### Context: first chunk\n\nsecond chunk ### Question: Who? ### Answer:");
  EXPECT_NE(p.system.find("arithemtic"), std::string::npos);
}

TEST(Heuristics, TaskTypes) {
  EXPECT_EQ(classify_task_type("How many acres does the campus cover?"), TaskType::kArithmetic);
  EXPECT_EQ(classify_task_type("What was the percentage change in revenue from 2019 to 2020?"), TaskType::kArithmetic);
  EXPECT_EQ(classify_task_type("Which university has the larger campus, University of New Haven or University of West Florida?"),
            TaskType::kMultiSource);
  EXPECT_EQ(classify_task_type("Were Scott Derrickson and Ed Wood both American?"), TaskType::kMultiSource);
  EXPECT_EQ(classify_task_type("100 Rifles is a western film, starring an actress of what nationality?"),
            TaskType::kMultiBridge);
  EXPECT_EQ(classify_task_type("Where was the director of 100 Rifles born?"), TaskType::kMultiBridge);
  EXPECT_EQ(classify_task_type("Summarize the main findings of the report."), TaskType::kAbstractive);
  EXPECT_EQ(classify_task_type("Who directed 100 Rifles?"), TaskType::kExtractive);
}

TEST(Heuristics, InfoPatterns) {
  EXPECT_EQ(classify_info_pattern("Who directed \"100 Rifles\"?"), InfoPattern::kExact);
  EXPECT_EQ(classify_info_pattern("what happened in 1969?"), InfoPattern::kExact);
  EXPECT_EQ(classify_info_pattern("what does the NASA report say?"), InfoPattern::kExact);
  EXPECT_EQ(classify_info_pattern("why do people enjoy western films?"), InfoPattern::kSame);
}

TEST(Heuristics, EvidenceDetection) {
  auto tok = fixtures::tokenizer();
  std::vector<std::string> ctx{"Tom Gries was born in Chicago."};
  EXPECT_TRUE(detect_evidence(*tok, "Where was Tom Gries born?", ctx));
  EXPECT_FALSE(detect_evidence(*tok, "What is the nationality of Raquel Welch?", ctx));
  EXPECT_FALSE(detect_evidence(*tok, "Where was Tom Gries born?", {}));
}

TEST(Analyze, HeuristicBackendFillsVerdicts) {
  auto s = small_stack();
  HeuristicAnalyzer h(s.tok);
  auto out = analyze("Where was Tom Gries born?", *s.catalog, h);
  EXPECT_FALSE(out.fallback);
  EXPECT_EQ(out.attempts, 1);
  EXPECT_EQ(out.granularity, 150u);
  EXPECT_FALSE(out.context_ids.empty());
  EXPECT_LE(out.context_ids.size(), 3u);
  EXPECT_TRUE(out.analysis.evidence_present);
  EXPECT_EQ(out.analysis.backend_id, "heuristic");
}

TEST(Analyze, RetriesOnceThenSucceeds) {
  auto s = small_stack();
  ScriptedAnalyzer b({"I think it is extractive.",
                      R"({"question-type": "multi-bridge", "info-type": "exact", "containing": "no"})"});
  auto out = analyze("q", *s.catalog, b);
  EXPECT_FALSE(out.fallback);
  EXPECT_EQ(out.attempts, 2);
  EXPECT_EQ(b.attempts, (std::vector<int>{0, 1}));
  EXPECT_EQ(out.analysis.task_type, TaskType::kMultiBridge);
}

TEST(Analyze, FallsBackAfterTwoFailures) {
  auto s = small_stack();
  for (auto replies : {std::vector<std::string>{"garbage", "still garbage"},
                       std::vector<std::string>{"<throw>", "<throw>"}}) {
    ScriptedAnalyzer b(replies);
    auto out = analyze("q", *s.catalog, b);
    EXPECT_TRUE(out.fallback);
    EXPECT_EQ(out.attempts, 2);
    EXPECT_FALSE(out.failure.empty());
    EXPECT_TRUE(same_verdicts(out.analysis, TaskAnalysis{TaskType::kAbstractive, InfoPattern::kSame, false, "", ""}));
    auto plan = make_plan(out.analysis);
    EXPECT_EQ(plan.pipeline, PipelineKind::kDirect);
    EXPECT_EQ(plan.retrieval.top_k, 8u);
    EXPECT_EQ(plan.retrieval.granularity, 400u);
  }
}

TEST(RemoteLmAnalyzer, AppendsReminderOnRetry) {
  auto s = small_stack();
  auto chat = std::shared_ptr<ScriptedBackend>(fixtures::script(
      R"({"match": "Please strictly follow the format.", "response": "{\"question-type\": \"extractive\", \"info-type\": \"exact\", \"containing\": \"yes\"}"}
{"default": "no idea"})"));
  RemoteLmAnalyzer lm(chat);
  auto out = analyze("Who directed 100 Rifles?", *s.catalog, lm);
  EXPECT_FALSE(out.fallback);
  EXPECT_EQ(out.attempts, 2);
  ASSERT_EQ(out.exchanges.size(), 2u);
  EXPECT_EQ(out.exchanges[1].request[1].content.substr(out.exchanges[1].request[1].content.size() - 34),
            "Please strictly follow the format.");
  EXPECT_EQ(out.exchanges[0].request[0].content, kAnalysisSystemPrompt);
}

#include <gtest/gtest.h>

#include <set>

#include "fixaudit/prompts.hpp"
#include "fixaudit/sft.hpp"
#include "fixture_support.hpp"

using namespace fixaudit;
using namespace fixaudit::testing;

namespace {

Corpus demo() { return load_corpus(fixture_path("demo/corpus.jsonl")); }

std::shared_ptr<ModelBackend> repeating(const std::string& role, const std::string& text, std::size_t n) {
  nlohmann::json s;
  for (std::size_t i = 0; i < n; ++i) s[role].push_back(text);
  return ScriptedBackend::from_json(s);
}

SftSample prediction(std::string program, std::string input, std::string answer) {
  SftSample s;
  s.task = SftTask::OutputPrediction;
  s.problem_id = "p";
  s.program = std::move(program);
  s.test_input = std::move(input);
  s.final_answer = std::move(answer);
  s.prompt = build_output_prediction_prompt(s.program, s.test_input);
  return s;
}

SftSample derivation(std::string problem_id, std::string input, std::string answer) {
  SftSample s;
  s.task = SftTask::SpecDerivation;
  s.problem_id = std::move(problem_id);
  s.test_input = std::move(input);
  s.final_answer = std::move(answer);
  s.prompt = build_spec_derivation_prompt("spec", s.test_input);
  return s;
}

}  // namespace

TEST(SftBuild, DerivationDrawsDistinctInputsPerProblem) {
  ModelGateway teacher(repeating("sft_teacher", "Answer: 1", 100));
  const auto report = build_spec_derivation_samples(demo(), teacher, 5, 3);
  ASSERT_EQ(report.samples.size(), 10u);
  std::map<std::string, std::set<std::string>> inputs;
  for (const auto& s : report.samples) {
    EXPECT_EQ(s.task, SftTask::SpecDerivation);
    EXPECT_EQ(s.final_answer, "1\n");
    EXPECT_TRUE(inputs[s.problem_id].insert(s.test_input).second) << s.test_input;
  }
  EXPECT_TRUE(check_task_hygiene(report.samples, demo()).empty());
}

TEST(SftBuild, OutputPredictionShowsCandidateProgram) {
  ModelGateway candidate(repeating("base", "```\nprint(7)\n```\n", 100));
  ModelGateway teacher(repeating("sft_teacher", "It prints seven.\n```\n7\n```\n", 100));
  const auto report = build_output_prediction_samples(demo(), candidate, teacher, 2, 1);
  ASSERT_EQ(report.samples.size(), 4u);
  for (const auto& s : report.samples) {
    EXPECT_EQ(s.program, "print(7)\n");
    EXPECT_NE(s.prompt.find("print(7)"), std::string::npos);
  }
  EXPECT_TRUE(check_task_hygiene(report.samples, demo()).empty());
  const Sandbox sb;
  EXPECT_EQ(rejection_filter(report.samples, demo(), sb).kept.size(), 4u);
}

TEST(SftBuild, ExhaustedAndUnparsableCounted) {
  nlohmann::json s;
  s["sft_teacher"] = {"no final answer here"};
  for (int i = 0; i < 100; ++i) s["sft_teacher"].push_back("Answer: 2");
  ModelGateway teacher(ScriptedBackend::from_json(s));
  const auto report = build_spec_derivation_samples(demo(), teacher, 50, 0);
  EXPECT_EQ(report.teacher_parse_failures, 1u);
  EXPECT_EQ(report.exhausted.size(), 2u);
  EXPECT_EQ(report.samples.size(), 18u + 11u - 1u);
}

TEST(SftBuild, SameSeedSameSamples) {
  auto build = [](std::uint64_t seed) {
    ModelGateway teacher(repeating("sft_teacher", "Answer: 1", 100));
    const auto r = build_spec_derivation_samples(demo(), teacher, 4, seed);
    return mix_and_emit(r.samples, {}, seed);
  };
  EXPECT_EQ(build(5), build(5));
  EXPECT_NE(build(5), build(6));
}

TEST(RejectionFilter, KeepsOnlyMatchingAnswers) {
  const std::string doubler = "print(int(input()) * 2)\n";
  const auto corpus = demo();
  const std::vector<SftSample> samples{
      prediction(doubler, "3\n", "6\n"),
      prediction(doubler, "3\n", "7\n"),
      prediction("raise SystemExit(1)\n", "3\n", "6\n"),
      derivation("nearest-integer", "1 1\n1\n", "0\n"),
      derivation("nearest-integer", "1 1\n1\n", "2\n"),
      derivation("missing", "1\n", "1\n"),
  };
  const Sandbox sb;
  const auto r = rejection_filter(samples, corpus, sb);
  ASSERT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.kept[0].final_answer, "6\n");
  EXPECT_EQ(r.kept[1].problem_id, "nearest-integer");
  ASSERT_EQ(r.rejected.size(), 4u);
  EXPECT_EQ(r.rejected[0].reason, "wrong_answer");
  EXPECT_EQ(r.rejected[1].reason, "ground_truth_failed");
  EXPECT_EQ(r.rejected[2].reason, "wrong_answer");
  EXPECT_EQ(r.rejected[3].reason, "uncheckable");
}

TEST(TaskHygiene, FlagsProgramsInDerivationPrompts) {
  const auto corpus = demo();
  auto leaked = derivation("nearest-integer", "1\n", "1\n");
  leaked.prompt = build_output_prediction_prompt(*corpus.problems[0].reference_solution, "1\n");
  auto missing = prediction("print(1)\n", "1\n", "1\n");
  missing.prompt = build_spec_derivation_prompt("spec", "1\n");
  const auto v = check_task_hygiene({leaked, missing}, corpus);
  EXPECT_EQ(v.size(), 2u);
}

TEST(MixAndEmit, PreservesEverySampleAsJsonLines) {
  std::vector<SftSample> a{prediction("print(1)\n", "x\n", "1\n")};
  std::vector<SftSample> b{derivation("q", "y\n", "2\n"), derivation("r", "z\n", "3\n")};
  const auto text = mix_and_emit(a, b, 9);
  std::multiset<std::string> ids;
  for (const auto& line : split_lines(text)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EXPECT_FALSE(j.contains("program"));
    ids.insert(j["problem_id"].get<std::string>());
  }
  EXPECT_EQ(ids, (std::multiset<std::string>{"p", "q", "r"}));
  EXPECT_EQ(text, mix_and_emit(a, b, 9));
}

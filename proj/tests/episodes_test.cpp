#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixaudit/episodes.hpp"
#include "fixaudit/error.hpp"
#include "fixture_support.hpp"

using namespace fixaudit;
using namespace fixaudit::testing;

namespace {

Corpus nearest_corpus() { return load_corpus(fixture_path("nearest_integer/corpus.jsonl")); }

EpisodeConfig four() {
  EpisodeConfig c;
  c.group_size = 4;
  return c;
}

EpisodeReport run_stage(Stage stage, const std::string& script, const std::vector<AuditorArtifact>& artifacts = {}) {
  ModelGateway gw(ScriptedBackend::from_file(fixture_path("nearest_integer/" + script)));
  const Sandbox sb;
  return generate_stage_episodes(stage, nearest_corpus(), gw, sb, four(), artifacts);
}

std::vector<AuditorArtifact> fixture_artifacts() {
  std::ifstream in(fixture_path("nearest_integer/stage_c_artifact.jsonl"));
  return read_auditor_artifacts(in);
}

void expect_rewards(const std::vector<double>& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << i;
}

}  // namespace

TEST(StageB, RoundOneRewardsPerSample) {
  const auto report = run_stage(Stage::B, "script_stage_b.json");
  ASSERT_EQ(report.groups.size(), 1u);
  const auto& g = report.groups[0];
  EXPECT_EQ(g.role, Role::FixerR1);
  EXPECT_EQ(g.group_id, "nearest-integer/B");
  EXPECT_NE(g.prompt.find("100 0\n"), std::string::npos);
  expect_rewards(g.rewards, {1, 0, 0, 0});
  ASSERT_EQ(report.rewards.size(), 4u);
  EXPECT_EQ(report.rewards[1].components[2].first, "regressed");
  EXPECT_EQ(report.rewards[1].components[2].second, true);
  EXPECT_EQ(filter_uniform_reward_groups(report.groups).size(), 1u);
}

TEST(StageC, AuditorRewardsUseAuxiliaryRepairs) {
  const auto report = run_stage(Stage::C, "script_stage_c.json");
  ASSERT_EQ(report.groups.size(), 1u);
  expect_rewards(report.groups[0].rewards, {1.3, 0.2, 0.0, 0.0});
  ASSERT_EQ(report.artifacts.size(), 1u);
  const auto& a = report.artifacts[0];
  EXPECT_EQ(a.target.id, "r1.0");
  EXPECT_EQ(a.target.source, nearest_program("v1"));
  ASSERT_EQ(a.tests.size(), 4u);
  EXPECT_TRUE(a.tests[0].valid && a.tests[0].reveals);
  EXPECT_TRUE(a.tests[1].valid && !a.tests[1].reveals);
  EXPECT_FALSE(a.tests[2].valid);
  EXPECT_FALSE(a.tests[3].parsed);
  EXPECT_EQ(choose_round2_hint(a), 0u);
}

TEST(StageC, AllInvalidTestsFormAUniformGroup) {
  const auto report = run_stage(Stage::C, "script_stage_c_invalid.json");
  ASSERT_EQ(report.groups.size(), 1u);
  expect_rewards(report.groups[0].rewards, {0, 0, 0, 0});
  EXPECT_TRUE(filter_uniform_reward_groups(report.groups).empty());
}

TEST(StageD, RoundTwoRewardsIncludeTheFullScore) {
  const auto report = run_stage(Stage::D, "script_stage_d.json", fixture_artifacts());
  ASSERT_EQ(report.groups.size(), 1u);
  const auto& g = report.groups[0];
  EXPECT_NE(g.prompt.find("1 1\n1\n"), std::string::npos);
  expect_rewards(g.rewards, {2.0, 1.0, 0.0, 0.6});
}

TEST(StageD, MissingArtifactSkipsProblem) {
  const auto report = run_stage(Stage::D, "script_stage_d.json");
  EXPECT_TRUE(report.groups.empty());
  ASSERT_EQ(report.skipped.size(), 1u);
  EXPECT_EQ(report.skipped[0].reason, "no stage C artifact");
}

TEST(Episodes, UncheckableProblemsAreSkipped) {
  auto corpus = nearest_corpus();
  corpus.problems[0].reference_solution.reset();
  corpus.problems[0].hidden_tests[0].expected_output.reset();
  ModelGateway gw(ScriptedBackend::from_file(fixture_path("nearest_integer/script_stage_b.json")));
  const Sandbox sb;
  const auto report = generate_stage_episodes(Stage::B, corpus, gw, sb, four());
  EXPECT_TRUE(report.groups.empty());
  EXPECT_EQ(report.skipped.size(), 1u);
  EXPECT_EQ(gw.invocations(), 0u);
}

TEST(Episodes, ArtifactsRoundTrip) {
  const auto original = fixture_artifacts();
  std::ostringstream out;
  write_auditor_artifacts(original, out);
  std::istringstream in(out.str());
  const auto back = read_auditor_artifacts(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].to_json(), original[0].to_json());
}

TEST(Episodes, HintPrefersRevealingThenValidThenParsed) {
  AuditorArtifact a;
  a.tests.resize(3);
  a.tests[0].parsed = false;
  a.tests[1].valid = false;
  a.tests[2].valid = true;
  EXPECT_EQ(choose_round2_hint(a), 2u);
  a.tests[2].valid = false;
  EXPECT_EQ(choose_round2_hint(a), 1u);
  a.tests[0] = ArtifactTest{};
  a.tests[0].reveals = true;
  a.tests[0].valid = true;
  EXPECT_EQ(choose_round2_hint(a), 0u);
  EXPECT_FALSE(choose_round2_hint(AuditorArtifact{}).has_value());
}

TEST(Episodes, StageNames) {
  EXPECT_EQ(stage_from_string("c"), Stage::C);
  EXPECT_THROW(stage_from_string("A"), ConfigError);
}

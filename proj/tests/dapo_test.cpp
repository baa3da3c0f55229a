#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fixaudit/dapo.hpp"
#include "fixaudit/error.hpp"

using namespace fixaudit;

namespace {

SampleGroup group(std::string id, std::vector<double> rewards) {
  SampleGroup g;
  g.group_id = id;
  g.problem_id = id;
  g.prompt = "prompt " + id;
  for (std::size_t i = 0; i < rewards.size(); ++i) g.responses.push_back("r" + std::to_string(i));
  g.rewards = std::move(rewards);
  return g;
}

}  // namespace

TEST(GroupAdvantages, SymmetricBinaryGroup) {
  const std::vector<double> r{1, 0, 0, 1};
  const std::vector<double> expected{1, -1, -1, 1};
  const auto exact = group_advantages(r, 0.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(exact[i], expected[i], 1e-9);
  // The default epsilon shrinks each entry by at most epsilon / std = 2e-8.
  const auto guarded = group_advantages(r);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(guarded[i], expected[i], 2.1e-8);
}

TEST(GroupAdvantages, ConstantGroupIsZeroEvenWithoutEpsilon) {
  const std::vector<double> r{0.3, 0.3, 0.3};
  for (double eps : {0.0, 1e-8}) {
    for (double a : group_advantages(r, eps)) EXPECT_EQ(a, 0.0);
  }
}

TEST(GroupAdvantages, RejectsTinyGroupsAndBadInput) {
  EXPECT_THROW(group_advantages(std::vector<double>{1.0}), ContractError);
  EXPECT_THROW(group_advantages(std::vector<double>{}), ContractError);
  EXPECT_THROW(group_advantages(std::vector<double>{1.0, NAN}), ContractError);
  EXPECT_THROW(group_advantages(std::vector<double>{1.0, 0.0}, -1.0), ContractError);
}

TEST(GroupAdvantages, ZeroSumAndUnitScaleOnRandomGroups) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int g = 0; g < 1000; ++g) {
    std::vector<double> r(2 + rng() % 15);
    for (auto& x : r) x = u(rng);
    const auto a = group_advantages(r, 0.0);
    EXPECT_LE(std::abs(std::accumulate(a.begin(), a.end(), 0.0)), 1e-9 * r.size());
    const double sq = std::inner_product(a.begin(), a.end(), a.begin(), 0.0) / a.size();
    EXPECT_NEAR(sq, 1.0, 1e-9);
  }
}

TEST(ProbabilityRatio, ExponentiatesDifference) {
  EXPECT_DOUBLE_EQ(probability_ratio(0.0, 0.0), 1.0);
  EXPECT_NEAR(probability_ratio(std::log(1.5), 0.0), 1.5, 1e-12);
  EXPECT_THROW(probability_ratio(INFINITY, 0.0), ContractError);
}

TEST(DapoObjective, UpperClipAtOnePointTwoEight) {
  const ClipBounds b;
  const std::vector<double> ratio{1.5}, pos{1.0}, neg{-1.0};
  EXPECT_NEAR(dapo_objective(ratio, pos, b), 1.28, 1e-12);
  EXPECT_NEAR(dapo_objective(ratio, neg, b), -1.5, 1e-12);
  const std::vector<double> low{0.5};
  EXPECT_NEAR(dapo_objective(low, pos, b), 0.5, 1e-12);
  EXPECT_NEAR(dapo_objective(low, neg, b), -0.8, 1e-12);
}

TEST(DapoObjective, SymmetricBoundsMatchPpoClip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ur(0.3, 2.0), ua(-2, 2);
  const ClipBounds sym{0.2, 0.2};
  for (int t = 0; t < 200; ++t) {
    std::vector<double> r(8), a(8);
    for (auto& x : r) x = ur(rng);
    for (auto& x : a) x = ua(rng);
    double ppo = 0;
    for (std::size_t i = 0; i < 8; ++i) ppo += std::min(r[i] * a[i], std::clamp(r[i], 0.8, 1.2) * a[i]);
    EXPECT_NEAR(dapo_objective(r, a, sym), ppo / 8, 1e-12);
  }
}

TEST(DapoObjective, GradientMatchesFiniteDifferences) {
  const ClipBounds b;
  const std::vector<double> logp_old{-1.0, -2.0, -0.5};
  const std::vector<double> logp_new{-0.95, -2.1, -0.48};
  const std::vector<double> adv{1.0, -0.5, 0.7};
  auto objective = [&](const std::vector<double>& lp) {
    std::vector<double> r;
    for (std::size_t i = 0; i < lp.size(); ++i) r.push_back(probability_ratio(lp[i], logp_old[i]));
    return dapo_objective(r, adv, b);
  };
  std::vector<double> ratios;
  for (std::size_t i = 0; i < 3; ++i) ratios.push_back(probability_ratio(logp_new[i], logp_old[i]));
  const auto grad = dapo_objective_logp_gradient(ratios, adv, b);
  for (std::size_t i = 0; i < 3; ++i) {
    const double h = 1e-6;
    auto up = logp_new, down = logp_new;
    up[i] += h;
    down[i] -= h;
    const double fd = (objective(up) - objective(down)) / (2 * h);
    EXPECT_LE(std::abs(fd - grad[i]) / std::max(std::abs(grad[i]), 1e-12), 1e-4) << i;
  }
}

TEST(DapoObjective, ClippedSamplesHaveNoGradient) {
  const std::vector<double> r{1.5}, a{1.0};
  EXPECT_EQ(dapo_objective_logp_gradient(r, a, ClipBounds{})[0], 0.0);
}

TEST(ClipBounds, RejectsNonPositiveBounds) {
  EXPECT_THROW((ClipBounds{0.0, 0.2}.validate()), ContractError);
  EXPECT_THROW((ClipBounds{-0.1, 0.2}.validate()), ContractError);
  EXPECT_THROW((ClipBounds{0.2, NAN}.validate()), ContractError);
  EXPECT_NO_THROW((ClipBounds{0.2, 0.2}.validate()));
}

TEST(DynamicSampling, DropsUniformGroupsAndKeepsOrder) {
  std::vector<SampleGroup> groups{group("a", {1, 1, 1}), group("b", {1, 0, 0}), group("c", {0, 0, 0}),
                                  group("d", {0.2, 1.3, 0})};
  const auto kept = filter_uniform_reward_groups(groups);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].group_id, "b");
  EXPECT_EQ(kept[1].group_id, "d");
  EXPECT_TRUE(filter_uniform_reward_groups(kept).size() == 2);
}

TEST(TrainingRecords, OnePerSampleWithGroupAdvantage) {
  const std::vector<SampleGroup> groups{group("a", {1, 0, 0, 1}), group("b", {2, 2})};
  const auto records = build_training_records(groups);
  ASSERT_EQ(records.size(), 6u);
  EXPECT_NEAR(records[0].advantage, 1.0, 1e-7);
  EXPECT_NEAR(records[1].advantage, -1.0, 1e-7);
  EXPECT_EQ(records[4].advantage, 0.0);
  EXPECT_EQ(records[2].response, "r2");
  EXPECT_EQ(records[5].group_id, "b");
}

TEST(SampleGroups, JsonRoundTrip) {
  auto g = group("a", {1, 0});
  g.logp_new = std::vector<double>{-1, -2};
  g.logp_old = std::vector<double>{-1.5, -2};
  std::ostringstream out;
  write_sample_groups(std::vector<SampleGroup>{g}, out);
  std::istringstream in(out.str());
  const auto back = read_sample_groups(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].rewards, g.rewards);
  EXPECT_EQ(back[0].logp_old, g.logp_old);
  EXPECT_EQ(back[0].role, g.role);
}

TEST(SampleGroups, MismatchedListsRejected) {
  auto g = group("a", {1, 0});
  g.responses.pop_back();
  EXPECT_THROW(g.validate(), ContractError);
}

TEST(Roles, NamesRoundTrip) {
  for (Role r : {Role::Base, Role::FixerR1, Role::Auditor, Role::FixerR2, Role::SftTeacher}) {
    EXPECT_EQ(role_from_string(to_string(r)), r);
  }
  EXPECT_THROW(role_from_string("oracle"), ContractError);
}

TEST(InvariantSuite, AllChecksPass) {
  for (const auto& c : run_dapo_invariant_suite(11, ClipBounds{}, 1000)) EXPECT_TRUE(c.passed) << c.name << " " << c.detail;
}

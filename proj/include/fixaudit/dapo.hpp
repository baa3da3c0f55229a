#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fixaudit {

enum class Role { Base, FixerR1, Auditor, FixerR2, SftTeacher };

std::string_view to_string(Role r);
/// Throws ContractError for an unknown name.
Role role_from_string(std::string_view name);

/// N samples drawn for one prompt.
struct SampleGroup {
  std::string group_id;
  std::string problem_id;
  Role role = Role::FixerR1;
  std::string prompt;
  std::vector<std::string> responses;
  std::vector<double> rewards;
  std::optional<std::vector<double>> logp_new;
  std::optional<std::vector<double>> logp_old;

  /// Throws ContractError when parallel lists disagree in length.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SampleGroup from_json(const nlohmann::json& j);
};

struct ClipBounds {
  double eps_low = 0.2;
  double eps_high = 0.28;

  void validate() const;
};

inline constexpr double kAdvantageEpsilon = 1e-8;

/// A_i = (r_i - mean) / (population std + epsilon). A zero-variance group maps
/// to all zeros, including when epsilon is 0.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon = kAdvantageEpsilon);

/// exp(logp_new - logp_old); throws ContractError on non-finite input.
double probability_ratio(double logp_new, double logp_old);

/// (1/N) sum_i min(r_i * A_i, clip(r_i, 1 - eps_low, 1 + eps_high) * A_i).
double dapo_objective(std::span<const double> ratios, std::span<const double> advantages, const ClipBounds& bounds);

/// Derivative of dapo_objective with respect to each sample's new log-prob.
/// Zero for samples whose clipped branch is active.
std::vector<double> dapo_objective_logp_gradient(std::span<const double> ratios, std::span<const double> advantages,
                                                 const ClipBounds& bounds);

/// Dynamic sampling: drop groups whose rewards are all equal. Order preserved.
std::vector<SampleGroup> filter_uniform_reward_groups(std::vector<SampleGroup> groups);

struct TrainingRecord {
  std::string problem_id;
  Role role = Role::FixerR1;
  std::string prompt;
  std::string response;
  double reward = 0.0;
  std::string group_id;
  double advantage = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// One record per sample, advantages normalized within each group.
std::vector<TrainingRecord> build_training_records(std::span<const SampleGroup> groups,
                                                   double epsilon = kAdvantageEpsilon);

void write_training_records(std::span<const TrainingRecord> records, std::ostream& out);
void write_sample_groups(std::span<const SampleGroup> groups, std::ostream& out);
std::vector<SampleGroup> read_sample_groups(std::istream& in);

struct InvariantCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Randomized self-check of the objective math: advantage zero-sum,
/// symmetric-clip reduction, permutation invariance and a finite-difference
/// gradient check.
std::vector<InvariantCheck> run_dapo_invariant_suite(std::uint64_t seed, const ClipBounds& bounds,
                                                     std::size_t instances = 1000);

}  // namespace fixaudit

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixaudit/corpus.hpp"
#include "fixaudit/sandbox.hpp"

namespace fixaudit {

enum class CandidateStage { Initial, Round1, Round2 };

std::string_view to_string(CandidateStage s);

struct Candidate {
  std::string id;
  std::string source;
  CandidateStage stage = CandidateStage::Initial;
  std::optional<std::string> parent;
  int cycle = 0;

  /// The "nothing parsed" placeholder; scored as failing every test.
  bool is_sentinel() const noexcept { return source.empty(); }
  static Candidate sentinel() { return Candidate{"<none>", {}, CandidateStage::Initial, std::nullopt, 0}; }

  bool operator==(const Candidate&) const = default;
};

/// Pass/fail of one program over an ordered set of tests.
class PassVector {
 public:
  PassVector() = default;
  /// Throws ContractError on length mismatch or duplicate ids.
  PassVector(std::vector<std::string> test_ids, std::vector<bool> passed);

  const std::vector<std::string>& test_ids() const noexcept { return test_ids_; }
  const std::vector<bool>& passed() const noexcept { return passed_; }
  std::size_t size() const noexcept { return passed_.size(); }
  std::size_t count() const noexcept;
  bool all() const noexcept { return count() == size(); }

 private:
  std::vector<std::string> test_ids_;
  std::vector<bool> passed_;
};

/// Stable identifier for the i-th test of a provenance, e.g. "hidden:3".
std::string test_id(Provenance provenance, std::size_t index);

/// Evaluate `program` on every test. Tests that cannot be checked propagate
/// UncheckableError.
PassVector evaluate_pass_vector(std::string_view program, std::span<const TestCase> tests,
                                const std::optional<std::string>& reference, const Sandbox& sandbox);

/// Ids for `public_tests` followed by `hidden_tests`.
std::vector<TestCase> all_tests(const Problem& problem);
std::vector<std::string> all_test_ids(const Problem& problem);

struct RegressionSet {
  std::vector<TestCase> tests;
  std::vector<std::string> test_ids;
  /// Tests skipped because no ground truth could be established.
  std::vector<std::string> uncheckable;
};

/// T_reg(P): the tests the candidate currently passes. Reward-only data.
RegressionSet collect_regression_set(std::string_view candidate, std::span<const TestCase> tests,
                                     std::span<const std::string> ids, const std::optional<std::string>& reference,
                                     const Sandbox& sandbox);

/// Regress(P -> P'): some test passed before and fails after.
bool regression(const PassVector& original, const PassVector& repaired);

/// R_fix^(1): 1 iff the failing test is fixed and nothing regressed.
double fixer_round1_reward(bool passes_failing_test, bool regressed);

/// Valid(x, y): the reference finished cleanly and agrees with the proposed output.
bool test_validity(std::string_view proposed_output, const ExecutionResult& reference_output,
                   const ComparisonPolicy& policy);

/// Reveal(P, x, y): a valid test on which the candidate errs or prints something else.
bool test_reveals(bool valid, const ExecutionResult& candidate_output, std::string_view proposed_output,
                  const ComparisonPolicy& policy);

inline constexpr double kAuxiliaryWeight = 0.1;

/// R_audit = Valid * (Reveal(target) + 0.1 * #aux revealed).
double auditor_reward(bool valid, bool reveals_target, std::span<const bool> aux_reveals);
double auditor_reward(bool valid, bool reveals_target, const std::vector<bool>& aux_reveals);

/// Delta_hid: hidden tests passed after but not before.
std::size_t hidden_improvement(const PassVector& before, const PassVector& after);

/// R_fix^(2) = 0 on regression, else min(1, 0.1 * delta) + AllPass.
double fixer_round2_reward(bool regressed, std::size_t delta_hidden, bool all_pass);

struct AuxiliaryPool {
  std::vector<Candidate> candidates;
  std::size_t k() const noexcept { return candidates.size(); }
};

/// Keep up to `k` candidates that fail at least one hidden test.
AuxiliaryPool build_auxiliary_pool(std::span<const Candidate> repairs, const Problem& problem, std::size_t k,
                                   const Sandbox& sandbox);

/// Audit-trail record {problem_id, role, stage, reward, components}.
struct RewardRecord {
  std::string problem_id;
  std::string role;
  std::string stage;
  double reward = 0.0;
  std::vector<std::pair<std::string, nlohmann::ordered_json>> components;

  nlohmann::ordered_json to_json() const;
};

}  // namespace fixaudit

#include "fixaudit/reward.hpp"

#include <algorithm>
#include <set>

#include "fixaudit/error.hpp"

namespace fixaudit {

std::string_view to_string(CandidateStage s) {
  switch (s) {
    case CandidateStage::Initial: return "initial";
    case CandidateStage::Round1: return "round1";
    case CandidateStage::Round2: return "round2";
  }
  return "unknown";
}

PassVector::PassVector(std::vector<std::string> test_ids, std::vector<bool> passed)
    : test_ids_(std::move(test_ids)), passed_(std::move(passed)) {
  if (test_ids_.size() != passed_.size()) throw ContractError("pass vector: id and result lists differ in length");
  std::set<std::string_view> seen;
  for (const auto& id : test_ids_) {
    if (!seen.insert(id).second) throw ContractError("pass vector: duplicate test id '" + id + "'");
  }
}

std::size_t PassVector::count() const noexcept {
  return static_cast<std::size_t>(std::count(passed_.begin(), passed_.end(), true));
}

std::string test_id(Provenance provenance, std::size_t index) {
  return std::string(to_string(provenance)) + ":" + std::to_string(index);
}

std::vector<TestCase> all_tests(const Problem& problem) {
  std::vector<TestCase> tests = problem.public_tests;
  tests.insert(tests.end(), problem.hidden_tests.begin(), problem.hidden_tests.end());
  return tests;
}

std::vector<std::string> all_test_ids(const Problem& problem) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < problem.public_tests.size(); ++i) ids.push_back(test_id(Provenance::Public, i));
  for (std::size_t i = 0; i < problem.hidden_tests.size(); ++i) ids.push_back(test_id(Provenance::Hidden, i));
  return ids;
}

PassVector evaluate_pass_vector(std::string_view program, std::span<const TestCase> tests,
                                const std::optional<std::string>& reference, const Sandbox& sandbox) {
  std::vector<std::string> ids;
  std::vector<bool> passed;
  std::vector<std::size_t> per_kind(3, 0);
  for (const auto& t : tests) {
    ids.push_back(test_id(t.provenance, per_kind[static_cast<std::size_t>(t.provenance)]++));
    passed.push_back(sandbox.passes(program, t, reference));
  }
  return PassVector(std::move(ids), std::move(passed));
}

RegressionSet collect_regression_set(std::string_view candidate, std::span<const TestCase> tests,
                                     std::span<const std::string> ids, const std::optional<std::string>& reference,
                                     const Sandbox& sandbox) {
  if (ids.size() != tests.size()) throw ContractError("regression set: ids and tests differ in length");
  RegressionSet set;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    try {
      if (sandbox.passes(candidate, tests[i], reference)) {
        set.tests.push_back(tests[i]);
        set.test_ids.push_back(ids[i]);
      }
    } catch (const UncheckableError&) {
      set.uncheckable.push_back(ids[i]);
    }
  }
  return set;
}

namespace {

void require_same_ids(const PassVector& a, const PassVector& b, const char* op) {
  if (a.test_ids() != b.test_ids()) throw ContractError(std::string(op) + ": pass vectors cover different tests");
}

}  // namespace

bool regression(const PassVector& original, const PassVector& repaired) {
  require_same_ids(original, repaired, "regression");
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (original.passed()[i] && !repaired.passed()[i]) return true;
  }
  return false;
}

double fixer_round1_reward(bool passes_failing_test, bool regressed) {
  if (!passes_failing_test) return 0.0;
  if (regressed) return 0.0;
  return 1.0;
}

bool test_validity(std::string_view proposed_output, const ExecutionResult& reference_output,
                   const ComparisonPolicy& policy) {
  return reference_output.ok() && compare_outputs(reference_output.stdout_text, proposed_output, policy);
}

bool test_reveals(bool valid, const ExecutionResult& candidate_output, std::string_view proposed_output,
                  const ComparisonPolicy& policy) {
  if (!valid) return false;
  return !candidate_output.ok() || !compare_outputs(candidate_output.stdout_text, proposed_output, policy);
}

namespace {

double auditor_reward_from_count(bool valid, bool reveals_target, long aux_revealed) {
  if (!valid) return 0.0;
  // Summed in tenths so results like 0.2 or 1.4 are the correctly rounded doubles.
  const long tenths = (reveals_target ? 10 : 0) + aux_revealed;
  return static_cast<double>(tenths) / 10.0;
}

}  // namespace

double auditor_reward(bool valid, bool reveals_target, std::span<const bool> aux_reveals) {
  return auditor_reward_from_count(valid, reveals_target,
                                   static_cast<long>(std::count(aux_reveals.begin(), aux_reveals.end(), true)));
}

double auditor_reward(bool valid, bool reveals_target, const std::vector<bool>& aux_reveals) {
  return auditor_reward_from_count(valid, reveals_target,
                                   static_cast<long>(std::count(aux_reveals.begin(), aux_reveals.end(), true)));
}

std::size_t hidden_improvement(const PassVector& before, const PassVector& after) {
  require_same_ids(before, after, "hidden_improvement");
  std::size_t delta = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (after.passed()[i] && !before.passed()[i]) ++delta;
  }
  return delta;
}

double fixer_round2_reward(bool regressed, std::size_t delta_hidden, bool all_pass) {
  if (regressed) return 0.0;
  const auto tenths = static_cast<double>(std::min<std::size_t>(delta_hidden, 10));
  return tenths / 10.0 + (all_pass ? 1.0 : 0.0);
}

AuxiliaryPool build_auxiliary_pool(std::span<const Candidate> repairs, const Problem& problem, std::size_t k,
                                   const Sandbox& sandbox) {
  AuxiliaryPool pool;
  for (const auto& c : repairs) {
    if (pool.candidates.size() >= k) break;
    if (c.is_sentinel()) continue;
    const bool fails_hidden = std::any_of(problem.hidden_tests.begin(), problem.hidden_tests.end(), [&](const auto& t) {
      return !sandbox.passes(c.source, t, problem.reference_solution);
    });
    if (fails_hidden) pool.candidates.push_back(c);
  }
  return pool;
}

nlohmann::ordered_json RewardRecord::to_json() const {
  nlohmann::ordered_json o;
  o["problem_id"] = problem_id;
  o["role"] = role;
  o["stage"] = stage;
  o["reward"] = reward;
  nlohmann::ordered_json comps = nlohmann::ordered_json::object();
  for (const auto& [k, v] : components) comps[k] = v;
  o["components"] = std::move(comps);
  return o;
}

}  // namespace fixaudit

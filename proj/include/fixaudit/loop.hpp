#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixaudit/corpus.hpp"
#include "fixaudit/model.hpp"
#include "fixaudit/prompts.hpp"
#include "fixaudit/reward.hpp"
#include "fixaudit/sandbox.hpp"

namespace fixaudit {

enum class RunMode { Inference, Training };

enum class CycleStrategy {
  /// Every cycle is charged four invocations. Later cycles regenerate the base
  /// candidate when the previous cycle did not raise the best public-pass
  /// count; otherwise, and whenever the Round-1 fix is skipped, the spare
  /// invocation buys an extra auditor probe.
  FreshBase,
  /// Later cycles keep the current candidate and cost three invocations.
  Continue,
};

std::string_view to_string(CycleStrategy s);
CycleStrategy cycle_strategy_from_string(std::string_view name);

struct LoopConfig {
  std::size_t budget = 20;
  std::size_t max_cycles = 5;
  CycleStrategy strategy = CycleStrategy::FreshBase;
  RunMode mode = RunMode::Inference;
  AuditorMode auditor_mode = AuditorMode::CodeReading;
  bool include_observed_output = true;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 8192;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

/// Problem access for the loop. Hidden tests and the reference solution are
/// unreachable in inference mode; every read is counted.
class ProblemView {
 public:
  ProblemView(const Problem& problem, RunMode mode) : problem_(&problem), mode_(mode) {}

  const std::string& id() const noexcept { return problem_->id; }
  const std::string& spec() const noexcept { return problem_->spec; }
  const std::vector<TestCase>& public_tests() const noexcept { return problem_->public_tests; }

  /// Throws ContractError in inference mode.
  const std::vector<TestCase>& hidden_tests() const;
  const std::optional<std::string>& reference() const;

  RunMode mode() const noexcept { return mode_; }
  std::size_t hidden_reads() const noexcept { return hidden_reads_; }
  std::size_t reference_reads() const noexcept { return reference_reads_; }

 private:
  const Problem* problem_;
  RunMode mode_;
  mutable std::size_t hidden_reads_ = 0;
  mutable std::size_t reference_reads_ = 0;
};

struct PoolEntry {
  Candidate candidate;
  std::size_t public_passed = 0;
  std::size_t public_total = 0;

  bool passes_public() const noexcept { return public_passed == public_total; }
};

/// One row per pool candidate, in generation order.
struct SelectionRow {
  std::size_t public_passed = 0;
  std::size_t public_total = 0;
  /// Valid auditor tests the candidate passes.
  std::size_t auditor_passed = 0;
};

struct Selection {
  std::optional<std::size_t> index;  // nullopt: empty pool, use the sentinel
  std::string rationale;
};

/// Candidates passing every public test compete on valid auditor tests
/// passed; otherwise the highest public-pass count wins. Ties go to the
/// latest-generated candidate.
Selection select_final(std::span<const SelectionRow> rows);

struct TraceStep {
  int cycle = 0;
  std::string kind;  // base | fixer_r1 | auditor | fixer_r2
  Role role = Role::Base;
  bool invoked = false;
  std::size_t invocation = 0;  // per-problem running count, when invoked
  std::string prompt_sha256;
  std::string response_sha256;
  /// candidate | test | parse_error | skipped
  std::string outcome;
  std::string detail;
  std::optional<std::string> candidate_id;
  std::optional<std::size_t> test_index;
  std::vector<bool> public_passed;  // of the step's resulting candidate
  nlohmann::ordered_json rewards;   // training mode only

  nlohmann::ordered_json to_json() const;
};

struct PoolRecord {
  std::string candidate_id;
  int cycle = 0;
  std::size_t public_passed = 0;
  std::size_t public_total = 0;
  /// Per auditor test: does this candidate's output match the expected output.
  std::vector<bool> auditor_passed;
};

struct LoopTrace {
  std::string problem_id;
  std::vector<TraceStep> steps;
  /// Every parsed candidate in generation order, including base candidates.
  std::vector<Candidate> candidates;
  std::vector<TestCase> auditor_tests;
  /// Whether each auditor test counts toward selection.
  std::vector<bool> auditor_valid;
  std::vector<PoolRecord> pool;
  Candidate selected = Candidate::sentinel();
  std::string selection_rationale;
  std::size_t invocations_used = 0;
  std::size_t cycles_completed = 0;
  std::vector<std::size_t> invocations_per_cycle;
  bool stopped_early = false;
  std::size_t hidden_reads = 0;
  std::size_t reference_reads = 0;

  /// Deterministic JSON Lines rendering (no timings).
  std::string to_jsonl() const;
  const Candidate* find_candidate(const std::string& id) const;
};

struct CycleState {
  std::string problem_id;
  int cycle_index = 0;
  Candidate current = Candidate::sentinel();
  std::vector<TestCase> auditor_tests;
  std::size_t invocations_used = 0;
  std::vector<PoolEntry> candidate_pool;
  bool improved_last_cycle = false;
  bool stopped = false;
};

struct LoopContext {
  ModelGateway& model;
  const Sandbox& sandbox;
  const LoopConfig& config;
};

/// Invocations the next cycle would need.
std::size_t cycle_cost(const CycleState& state, const LoopConfig& config);

/// One test-and-repair cycle: base generation (when due), Round-1 fix against
/// the first failing public test, auditor probe(s) and Round-2 fix with the
/// auditor test as a hint. Parse failures leave the previous artifact in place.
CycleState run_cycle(const ProblemView& problem, CycleState state, const LoopContext& ctx, LoopTrace& trace);

struct PipelineResult {
  Candidate final_candidate;
  LoopTrace trace;
};

PipelineResult run_pipeline(const Problem& problem, const LoopContext& ctx);

/// Replays select_final over the part of the pool that existed after
/// `cycle` (all cycles when nullopt).
Selection replay_selection(const LoopTrace& trace, std::optional<int> cycle = std::nullopt);

}  // namespace fixaudit

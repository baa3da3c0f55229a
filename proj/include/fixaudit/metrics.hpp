#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fixaudit/corpus.hpp"
#include "fixaudit/loop.hpp"
#include "fixaudit/sandbox.hpp"

namespace fixaudit {

struct IterationSnapshot {
  int cycle = 0;
  std::size_t hidden_passed = 0;
  std::string candidate_id;
};

struct ProblemResult {
  std::string problem_id;
  std::size_t hidden_passed = 0;
  std::size_t hidden_total = 0;
  std::string selected_candidate;
  std::vector<IterationSnapshot> per_iteration_snapshots;
  std::size_t invocations_used = 0;
  /// Set when the pipeline failed on this problem; the result then scores zero.
  std::optional<std::string> error;

  bool fully_passed() const noexcept { return hidden_total > 0 && hidden_passed == hidden_total; }
};

/// Hidden-test score of the final selection, plus one snapshot per completed
/// cycle obtained by replaying selection on the pool as it stood then.
ProblemResult evaluate_trace(const Problem& problem, const LoopTrace& trace, const Sandbox& sandbox);

/// Hidden tests passed by every traced candidate, in generation order.
std::vector<std::pair<std::string, std::size_t>> candidate_hidden_trajectory(const Problem& problem,
                                                                             const LoopTrace& trace,
                                                                             const Sandbox& sandbox);

struct Score {
  double percent = 0.0;
  std::size_t counted = 0;
  /// Problems without hidden tests.
  std::vector<std::string> excluded;
};

Score pass_at_1(const std::vector<ProblemResult>& results);
Score avg_pass_ratio(const std::vector<ProblemResult>& results);

/// Pass@1 after each cycle 1..max_cycles. Runs that stopped early keep their
/// last snapshot for the remaining cycles.
std::vector<double> iteration_curve(const std::vector<ProblemResult>& results, std::size_t max_cycles);

/// Two-decimal percentage, e.g. "55.00".
std::string format_percent(double percent);

struct AuditItem {
  TestCase test;
  std::string target_source;
  std::optional<std::string> reference;
};

struct AuditQualityReport {
  std::size_t checkable = 0;
  std::size_t valid = 0;
  std::size_t invalid = 0;
  std::size_t bug_revealing = 0;
  std::size_t candidate_correct = 0;
  std::size_t uncheckable = 0;

  bool consistent() const noexcept {
    return checkable == valid + invalid && valid == bug_revealing + candidate_correct;
  }
  bool operator==(const AuditQualityReport&) const = default;
};

/// Tests without a reference are counted as uncheckable and left out of the partition.
AuditQualityReport audit_quality(const std::vector<AuditItem>& items, const Sandbox& sandbox);

/// Each auditor test of a trace paired with the candidate it was written against.
std::vector<AuditItem> audit_items_from_trace(const Problem& problem, const LoopTrace& trace);

/// Same, reading a trace file produced by LoopTrace::to_jsonl.
std::vector<AuditItem> audit_items_from_jsonl(const Problem& problem, std::istream& trace_jsonl);

void write_summary_json(const std::vector<ProblemResult>& results, std::size_t max_cycles, std::ostream& out);
void write_results_csv(const std::vector<ProblemResult>& results, std::ostream& out);
void write_curve_tsv(const std::vector<double>& curve, std::ostream& out);

}  // namespace fixaudit

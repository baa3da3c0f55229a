#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fixaudit {

enum class Provenance { Public, Hidden, Auditor };

std::string_view to_string(Provenance p);

struct TestCase {
  std::string input;
  /// Absent means "derive from the reference solution".
  std::optional<std::string> expected_output;
  Provenance provenance = Provenance::Public;
  /// Generation cycle for auditor tests (>= 1); zero otherwise.
  int cycle = 0;

  bool operator==(const TestCase&) const = default;
};

struct Problem {
  std::string id;
  std::string spec;
  std::vector<TestCase> public_tests;
  std::vector<TestCase> hidden_tests;
  std::optional<std::string> reference_solution;
  std::optional<std::string> difficulty;

  /// Reward-bearing pipelines need a reference solution.
  bool checkable() const noexcept { return reference_solution.has_value(); }
  std::size_t test_count() const noexcept { return public_tests.size() + hidden_tests.size(); }

  bool operator==(const Problem&) const = default;
};

struct Corpus {
  std::vector<Problem> problems;
  std::string source_label;

  const Problem* find(std::string_view id) const;
};

/// Parse JSON Lines. Blank lines are skipped; errors carry the line number.
Corpus parse_corpus(std::istream& in, std::string source_label = {});
Corpus load_corpus(const std::string& path);

void save_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::string& path);

/// Keep problems with at least `min_count` public + hidden tests.
Corpus filter_min_tests(const Corpus& corpus, std::size_t min_count = 20);

/// Lowercased, punctuation-stripped, whitespace-split tokens.
std::vector<std::string> decontamination_tokens(std::string_view text);

struct Contamination {
  std::string train_id;
  std::string eval_id;
  /// One shared window, tokens joined by single spaces.
  std::string window;

  bool operator==(const Contamination&) const = default;
};

struct DecontaminationResult {
  Corpus kept;
  /// Sorted by train id, then eval id.
  std::vector<Contamination> removed;
};

/// Drop every train problem whose spec shares a length-n token window with any
/// eval spec. Reports one witness window per (train, eval) pair.
DecontaminationResult ngram_decontaminate(const Corpus& train, const Corpus& eval, std::size_t n = 13);

void write_contamination_report(const std::vector<Contamination>& removed, std::ostream& out);

enum class Severity { Warning, Error };

struct ValidationIssue {
  Severity severity;
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool uncheckable = false;

  bool empty() const noexcept { return issues.empty(); }
};

ValidationReport validate_problem(const Problem& problem);

}  // namespace fixaudit

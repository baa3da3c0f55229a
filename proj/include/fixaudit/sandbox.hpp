#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fixaudit/corpus.hpp"

namespace fixaudit {

struct ExecutionLimits {
  std::chrono::duration<double> wall_clock_timeout{10.0};
  std::size_t max_output_bytes = 16u << 20;
  std::optional<std::size_t> max_memory;

  /// Throws ContractError when a limit is not positive.
  void validate() const;
};

enum class ExecutionStatus { Ok, Timeout, RuntimeError, OutputTruncated, SpawnError };

std::string_view to_string(ExecutionStatus s);

struct ExecutionResult {
  ExecutionStatus status = ExecutionStatus::SpawnError;
  std::string stdout_text;
  std::string stderr_text;
  double duration_seconds = 0.0;
  /// Exit code when the process exited normally, the negated signal number
  /// when it was killed, and -1 otherwise.
  int exit_code = -1;

  bool ok() const noexcept { return status == ExecutionStatus::Ok; }
};

struct ComparisonPolicy {
  bool trim_trailing_whitespace = true;
  bool collapse_internal_blank_lines = false;
  /// Numeric tokens match when |a - b| <= tol * max(1, |b|).
  std::optional<double> float_tolerance;
};

/// Command line used to run a program file, e.g. "python3 {program}".
struct Interpreter {
  std::string command_template = "python3 {program}";
  std::string program_filename = "program.py";

  /// Whitespace-split template with `{program}` substituted.
  std::vector<std::string> argv(const std::string& program_path) const;
};

/// Run `program` through `interpreter` in a fresh temporary directory, feeding
/// `input` on stdin. The whole process group is killed at the deadline.
ExecutionResult run_program(std::string_view program, std::string_view input, const ExecutionLimits& limits,
                            const Interpreter& interpreter);

bool compare_outputs(std::string_view actual, std::string_view expected, const ComparisonPolicy& policy);

/// Shared execution service: limits, comparison policy, a bound on concurrent
/// children and a result cache keyed by (program, input).
class Sandbox {
 public:
  struct Options {
    ExecutionLimits limits;
    ComparisonPolicy policy;
    Interpreter interpreter;
    std::size_t max_concurrency = 0;  // 0 = logical CPU count
    bool cache = true;
    std::optional<std::string> trace_dir;
  };

  Sandbox();
  explicit Sandbox(Options options);

  /// Throws SpawnError when the interpreter cannot be started.
  ExecutionResult run(std::string_view program, std::string_view input) const;

  /// Run(G, x). Throws UncheckableError when no reference is given or the
  /// reference does not finish cleanly.
  std::string reference_output(const std::optional<std::string>& reference, std::string_view input) const;

  /// Pass(P, x) = 1[Run(P, x) = Run(G, x)]; a stored expected output stands in
  /// for Run(G, x). Any non-ok status is a failure. An empty program never passes.
  bool passes(std::string_view program, const TestCase& test, const std::optional<std::string>& reference) const;

  bool same_output(std::string_view actual, std::string_view expected) const {
    return compare_outputs(actual, expected, options_.policy);
  }

  const Options& options() const noexcept { return options_; }
  const ComparisonPolicy& policy() const noexcept { return options_.policy; }

  std::size_t executions() const;

 private:
  ExecutionResult execute(std::string_view program, std::string_view input) const;
  void persist(const std::string& key, std::string_view program, std::string_view input,
               const ExecutionResult& result) const;

  Options options_;
  std::shared_ptr<std::counting_semaphore<>> slots_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, ExecutionResult> cache_;
  mutable std::size_t executions_ = 0;
};

}  // namespace fixaudit

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixaudit/corpus.hpp"
#include "fixaudit/model.hpp"
#include "fixaudit/sandbox.hpp"

namespace fixaudit {

enum class SftTask { OutputPrediction, SpecDerivation };

std::string_view to_string(SftTask t);

struct SftSample {
  SftTask task = SftTask::OutputPrediction;
  std::string prompt;
  std::string target;  // full teacher response
  std::string final_answer;
  std::string problem_id;
  std::string test_input;
  /// Program whose output was predicted (output prediction only). Not emitted.
  std::string program;

  /// {task, prompt, target, final_answer, problem_id, test_input}
  nlohmann::ordered_json to_json() const;
};

struct SftBuildReport {
  std::vector<SftSample> samples;
  std::size_t teacher_parse_failures = 0;
  std::size_t candidate_parse_failures = 0;
  /// Problems whose input pool ran out before `per_problem` samples.
  std::vector<std::string> exhausted;
  std::vector<std::string> uncheckable;
};

/// Per sample: the candidate model writes a solution, a fresh test input is
/// drawn without replacement and the teacher predicts the program's output.
SftBuildReport build_output_prediction_samples(const Corpus& corpus, ModelGateway& candidate_model,
                                               ModelGateway& teacher, std::size_t per_problem, std::uint64_t seed);

/// Per sample: the teacher derives the output from the specification alone.
SftBuildReport build_spec_derivation_samples(const Corpus& corpus, ModelGateway& teacher, std::size_t per_problem,
                                             std::uint64_t seed);

struct RejectedSample {
  SftSample sample;
  /// wrong_answer | ground_truth_failed | uncheckable
  std::string reason;
};

struct FilterResult {
  std::vector<SftSample> kept;
  std::vector<RejectedSample> rejected;
};

/// Keep a sample iff its final answer matches the ground truth: the sandbox
/// run of its program (output prediction) or of the reference (derivation).
FilterResult rejection_filter(const std::vector<SftSample>& samples, const Corpus& corpus, const Sandbox& sandbox);

/// Seeded uniform interleave of both task lists, rendered as JSON Lines.
std::string mix_and_emit(const std::vector<SftSample>& a, const std::vector<SftSample>& b, std::uint64_t seed);

/// Problems with a prompt violating task hygiene: output prediction prompts
/// must carry the program, derivation prompts must carry none.
std::vector<std::string> check_task_hygiene(const std::vector<SftSample>& samples, const Corpus& corpus);

}  // namespace fixaudit

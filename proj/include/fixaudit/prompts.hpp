#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "fixaudit/corpus.hpp"
#include "fixaudit/sandbox.hpp"

namespace fixaudit {

/// Bumped whenever any template below changes wording.
inline constexpr std::string_view kPromptTemplateVersion = "fixaudit-prompts/1";

enum class AuditorMode {
  CodeReading,  // sees the candidate source
  Blind,        // specification only
};

std::string build_base_prompt(std::string_view spec);

/// Round-1 repair prompt. `failing_test` must be a public test; hidden tests
/// are rejected with ContractError. `observed` is the candidate's run on it.
std::string build_fixer_r1_prompt(std::string_view spec, std::string_view candidate, const TestCase& failing_test,
                                  const std::optional<ExecutionResult>& observed, bool include_observed = true);

/// Asks for one complete test (input and expected output) in the wire format.
/// In code-reading mode an empty candidate is a ContractError.
std::string build_auditor_prompt(std::string_view spec, std::string_view candidate,
                                 AuditorMode mode = AuditorMode::CodeReading);

/// Round-2 prompt presenting an auditor test as a possibly wrong hint.
std::string build_fixer_r2_prompt(std::string_view spec, std::string_view candidate, const TestCase& auditor_test);

/// Program Output Prediction: program and input, no specification.
std::string build_output_prediction_prompt(std::string_view program, std::string_view input);

/// Specification-to-Output Derivation: specification and input, never a program.
std::string build_spec_derivation_prompt(std::string_view spec, std::string_view input);

/// Wraps source in a fenced block.
std::string format_program(std::string_view source);

/// Last fenced code block, or the whole response when there is none.
/// Throws ParseError when the extracted source is blank.
std::string parse_program(std::string_view response);

/// Auditor wire format:
///
///     ```
///     INPUT:
///     <input lines>
///     EXPECTED_OUTPUT:
///     <output lines>
///     ```
std::string format_test_case(const TestCase& test);

/// Throws ParseError when a section is missing. Result has provenance auditor.
TestCase parse_test_case(std::string_view response, int cycle = 1);

/// Last fenced block, else the text after the last "Answer:" marker.
std::optional<std::string> extract_final_answer(std::string_view response);

}  // namespace fixaudit

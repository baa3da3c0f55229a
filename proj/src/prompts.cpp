#include "fixaudit/prompts.hpp"

#include <vector>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

namespace {

/// Lines of `text`; a trailing newline does not start an extra empty line.
std::vector<std::string> lines_of(std::string_view text) {
  auto lines = split_lines(text);
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::string with_newline(std::string_view s) {
  std::string out(s);
  if (!out.empty() && out.back() != '\n') out.push_back('\n');
  return out;
}

bool is_fence(std::string_view line) {
  const auto t = trim(line);
  return t.size() >= 3 && t.substr(0, 3) == "```";
}

/// Contents of every complete fenced block, in order.
std::vector<std::string> fenced_blocks(std::string_view text) {
  std::vector<std::string> blocks;
  const auto lines = lines_of(text);
  std::optional<std::string> open;
  for (const auto& line : lines) {
    if (!open) {
      if (is_fence(line)) open.emplace();
      continue;
    }
    if (trim(line) == "```") {
      blocks.push_back(std::move(*open));
      open.reset();
      continue;
    }
    *open += line;
    *open += '\n';
  }
  return blocks;
}

std::string indent_block(std::string_view label, std::string_view body) {
  std::string out;
  out += label;
  out += ":\n```\n";
  out += with_newline(body);
  out += "```\n";
  return out;
}

}  // namespace

std::string build_base_prompt(std::string_view spec) {
  std::string p;
  p += "You are an expert competitive programmer. Solve the following problem.\n";
  p += "Read input from standard input and write the answer to standard output.\n\n";
  p += "### Problem\n";
  p += with_newline(spec);
  p += "\nReturn the complete program in a single fenced code block.\n";
  return p;
}

std::string build_fixer_r1_prompt(std::string_view spec, std::string_view candidate, const TestCase& failing_test,
                                  const std::optional<ExecutionResult>& observed, bool include_observed) {
  if (failing_test.provenance != Provenance::Public) {
    throw ContractError("round-1 repair prompts may only show public tests");
  }
  std::string p;
  p += "You are debugging a solution to a competitive programming problem.\n";
  p += "The program below fails a public test. Repair the bug while keeping the parts that already work.\n\n";
  p += "### Problem\n";
  p += with_newline(spec);
  p += "\n### Current program\n```\n";
  p += with_newline(candidate);
  p += "```\n\n### Failing test\n";
  p += indent_block("Input", failing_test.input);
  p += indent_block("Expected output", failing_test.expected_output.value_or(""));
  if (include_observed && observed) {
    switch (observed->status) {
      case ExecutionStatus::Ok:
        p += indent_block("Program output", observed->stdout_text);
        break;
      case ExecutionStatus::Timeout:
        p += "Program output: (the run timed out before producing an answer)\n";
        break;
      case ExecutionStatus::OutputTruncated:
        p += "Program output: (output exceeded the size limit and was cut off)\n";
        break;
      case ExecutionStatus::RuntimeError:
        p += "Program output: (the program crashed)\n";
        if (!observed->stderr_text.empty()) p += indent_block("Error output", observed->stderr_text);
        break;
      case ExecutionStatus::SpawnError:
        break;
    }
  }
  p += "\nReturn the complete repaired program in a single fenced code block.\n";
  return p;
}

std::string build_auditor_prompt(std::string_view spec, std::string_view candidate, AuditorMode mode) {
  std::string p;
  if (mode == AuditorMode::CodeReading) {
    if (trim(candidate).empty()) throw ContractError("auditor prompt needs a non-empty candidate program");
    p += "You are reviewing a solution to a competitive programming problem.\n";
    p += "Read the program carefully and find an input on which it produces a wrong answer.\n\n";
  } else {
    p += "You are writing a test for a competitive programming problem.\n";
    p += "Write an input that exercises tricky cases of the problem.\n\n";
  }
  p += "### Problem\n";
  p += with_newline(spec);
  if (mode == AuditorMode::CodeReading) {
    p += "\n### Program under review\n```\n";
    p += with_newline(candidate);
    p += "```\n";
  }
  p += "\nPropose one complete test case. The expected output must be the correct answer according to the problem "
       "statement, not the output of the program.\n";
  p += "Answer with exactly one fenced block in this format:\n";
  p += "```\nINPUT:\n<test input>\nEXPECTED_OUTPUT:\n<correct output>\n```\n";
  return p;
}

std::string build_fixer_r2_prompt(std::string_view spec, std::string_view candidate, const TestCase& auditor_test) {
  if (auditor_test.provenance != Provenance::Auditor) {
    throw ContractError("round-2 repair prompts take an auditor-generated test");
  }
  std::string p;
  p += "You are refining a solution to a competitive programming problem.\n";
  p += "A reviewer proposed the test below as a case the program may get wrong. The reviewer can be mistaken: "
       "the expected output may itself be wrong. Treat it as a hint, decide whether it points to a real bug, and "
       "fix the program if so.\n\n";
  p += "### Problem\n";
  p += with_newline(spec);
  p += "\n### Current program\n```\n";
  p += with_newline(candidate);
  p += "```\n\n### Reviewer's test (may be wrong)\n";
  p += indent_block("Input", auditor_test.input);
  p += indent_block("Claimed expected output", auditor_test.expected_output.value_or(""));
  p += "\nReturn the complete program in a single fenced code block.\n";
  return p;
}

std::string build_output_prediction_prompt(std::string_view program, std::string_view input) {
  std::string p;
  p += "Predict exactly what the following program prints when run with the given standard input.\n";
  p += "Trace the execution step by step, then give the final output in a fenced block (or after \"Answer:\").\n\n";
  p += "### Program\n```\n";
  p += with_newline(program);
  p += "```\n\n";
  p += indent_block("### Input", input);
  return p;
}

std::string build_spec_derivation_prompt(std::string_view spec, std::string_view input) {
  std::string p;
  p += "Using only the problem statement, derive the correct output for the given input.\n";
  p += "Reason step by step, then give the final output in a fenced block (or after \"Answer:\").\n\n";
  p += "### Problem\n";
  p += with_newline(spec);
  p += "\n";
  p += indent_block("### Input", input);
  return p;
}

std::string format_program(std::string_view source) {
  return "```\n" + with_newline(source) + "```\n";
}

std::string parse_program(std::string_view response) {
  const auto blocks = fenced_blocks(response);
  std::string source = blocks.empty() ? std::string(response) : blocks.back();
  if (trim(source).empty()) throw ParseError("no program found in response");
  return source;
}

std::string format_test_case(const TestCase& test) {
  std::string s = "```\nINPUT:\n";
  s += with_newline(test.input);
  s += "EXPECTED_OUTPUT:\n";
  s += with_newline(test.expected_output.value_or(""));
  s += "```\n";
  return s;
}

TestCase parse_test_case(std::string_view response, int cycle) {
  std::string body(response);
  const auto blocks = fenced_blocks(response);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    if (it->find("INPUT:") != std::string::npos) {
      body = *it;
      break;
    }
  }
  const auto lines = lines_of(body);
  std::optional<std::size_t> input_at, output_at;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto t = trim(lines[i]);
    if (!input_at && t == "INPUT:") input_at = i;
    else if (input_at && !output_at && t == "EXPECTED_OUTPUT:") output_at = i;
  }
  if (!input_at) throw ParseError("test case lacks an INPUT section");
  if (!output_at) throw ParseError("test case lacks an EXPECTED_OUTPUT section");

  TestCase tc;
  tc.provenance = Provenance::Auditor;
  tc.cycle = cycle;
  std::string out;
  for (std::size_t i = *input_at + 1; i < *output_at; ++i) tc.input += lines[i] + "\n";
  for (std::size_t i = *output_at + 1; i < lines.size(); ++i) {
    if (blocks.empty() && is_fence(lines[i])) break;
    out += lines[i] + "\n";
  }
  if (tc.input.empty()) throw ParseError("test case INPUT section is empty");
  tc.expected_output = std::move(out);
  return tc;
}

std::optional<std::string> extract_final_answer(std::string_view response) {
  const auto blocks = fenced_blocks(response);
  if (!blocks.empty() && !trim(blocks.back()).empty()) return blocks.back();
  const auto pos = response.rfind("Answer:");
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = response.substr(pos + 7);
  while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
  if (!rest.empty() && rest.front() == '\n') rest.remove_prefix(1);
  if (trim(rest).empty()) return std::nullopt;
  return with_newline(trim_right(rest));
}

}  // namespace fixaudit

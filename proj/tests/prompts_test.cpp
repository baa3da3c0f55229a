#include <gtest/gtest.h>

#include "fixaudit/error.hpp"
#include "fixaudit/prompts.hpp"
#include "fixture_support.hpp"

using namespace fixaudit;
using namespace fixaudit::testing;

TEST(Prompts, BaseCarriesSpecOnly) {
  const auto p = nearest_integer();
  const auto prompt = build_base_prompt(p.spec);
  EXPECT_NE(prompt.find(p.spec), std::string::npos);
  for (const auto& t : p.hidden_tests) EXPECT_EQ(prompt.find(t.input), std::string::npos);
}

TEST(Prompts, RoundOneShowsFailingPublicTestAndObservedOutput) {
  const auto p = nearest_integer();
  ExecutionResult observed;
  observed.status = ExecutionStatus::Ok;
  observed.stdout_text = "4\n";
  const auto prompt = build_fixer_r1_prompt(p.spec, "print(4)\n", p.public_tests[1], observed);
  EXPECT_NE(prompt.find(p.public_tests[1].input), std::string::npos);
  EXPECT_NE(prompt.find("Program output"), std::string::npos);
  EXPECT_EQ(build_fixer_r1_prompt(p.spec, "print(4)\n", p.public_tests[1], observed, false).find("Program output"),
            std::string::npos);
}

TEST(Prompts, RoundOneRefusesHiddenTests) {
  const auto p = nearest_integer();
  EXPECT_THROW(build_fixer_r1_prompt(p.spec, "x", p.hidden_tests[0], std::nullopt), ContractError);
}

TEST(Prompts, TimeoutObservationIsDescribed) {
  ExecutionResult observed;
  observed.status = ExecutionStatus::Timeout;
  const TestCase t{"1\n", "1\n", Provenance::Public, 0};
  EXPECT_NE(build_fixer_r1_prompt("s", "c", t, observed).find("timed out"), std::string::npos);
}

TEST(Prompts, AuditorModesDifferInProgramVisibility) {
  const auto reading = build_auditor_prompt("spec text", "SECRET_PROGRAM_BODY\n", AuditorMode::CodeReading);
  const auto blind = build_auditor_prompt("spec text", "SECRET_PROGRAM_BODY\n", AuditorMode::Blind);
  EXPECT_NE(reading.find("SECRET_PROGRAM_BODY"), std::string::npos);
  EXPECT_EQ(blind.find("SECRET_PROGRAM_BODY"), std::string::npos);
  EXPECT_NE(blind.find("spec text"), std::string::npos);
  EXPECT_THROW(build_auditor_prompt("spec", "  \n", AuditorMode::CodeReading), ContractError);
  EXPECT_NO_THROW(build_auditor_prompt("spec", "", AuditorMode::Blind));
}

TEST(Prompts, RoundTwoPresentsAuditorTestAsHint) {
  const TestCase hint{"1 1\n1\n", "0\n", Provenance::Auditor, 1};
  const auto prompt = build_fixer_r2_prompt("spec", "print(2)\n", hint);
  EXPECT_NE(prompt.find("1 1\n1\n"), std::string::npos);
  EXPECT_NE(prompt.find("0\n"), std::string::npos);
  EXPECT_NE(prompt.find("may be wrong"), std::string::npos);
  EXPECT_THROW(build_fixer_r2_prompt("spec", "x", TestCase{"1\n", "1\n", Provenance::Public, 0}), ContractError);
}

TEST(Prompts, SftTasksAreSeparated) {
  const auto pred = build_output_prediction_prompt("print(input())\n", "5\n");
  EXPECT_NE(pred.find("### Program"), std::string::npos);
  EXPECT_NE(pred.find("print(input())"), std::string::npos);
  const auto derive = build_spec_derivation_prompt("Echo the number.", "5\n");
  EXPECT_EQ(derive.find("### Program"), std::string::npos);
  EXPECT_NE(derive.find("Echo the number."), std::string::npos);
}

TEST(ParseProgram, TakesLastFencedBlock) {
  EXPECT_EQ(parse_program("draft\n```python\nprint(1)\n```\nfinal\n```python\nprint(2)\n```\n"), "print(2)\n");
  EXPECT_EQ(parse_program("print(3)\n"), "print(3)\n");
  EXPECT_THROW(parse_program("```\n\n```\n"), ParseError);
  EXPECT_THROW(parse_program("   "), ParseError);
}

TEST(ParseProgram, FormatRoundTrip) {
  const std::string src = "import sys\nprint(sys.stdin.read())\n";
  EXPECT_EQ(parse_program(format_program(src)), src);
}

TEST(ParseTestCase, RoundTripsWireFormat) {
  const TestCase t{"3 100\n90 95 100\n", "90.0000000000\n", Provenance::Auditor, 2};
  const auto back = parse_test_case("Here it is.\n" + format_test_case(t), 2);
  EXPECT_EQ(back, t);
}

TEST(ParseTestCase, MultiLineSectionsAndUnfencedText) {
  const auto t = parse_test_case("INPUT:\n2\na\nb\nEXPECTED_OUTPUT:\nA\nB\n", 1);
  EXPECT_EQ(t.input, "2\na\nb\n");
  EXPECT_EQ(t.expected_output, "A\nB\n");
  EXPECT_EQ(t.provenance, Provenance::Auditor);
}

TEST(ParseTestCase, MissingSectionsAreParseErrors) {
  EXPECT_THROW(parse_test_case("I could not find a failing input."), ParseError);
  EXPECT_THROW(parse_test_case("```\nINPUT:\n1\n```\n"), ParseError);
  EXPECT_THROW(parse_test_case("```\nINPUT:\nEXPECTED_OUTPUT:\n1\n```\n"), ParseError);
}

TEST(FinalAnswer, FencedBlockOrAnswerMarker) {
  EXPECT_EQ(extract_final_answer("thinking\n```\n42\n```\n"), "42\n");
  EXPECT_EQ(extract_final_answer("so the output is\nAnswer: 7"), "7\n");
  EXPECT_EQ(extract_final_answer("Answer:\n1 2\n3\n"), "1 2\n3\n");
  EXPECT_FALSE(extract_final_answer("no idea").has_value());
}

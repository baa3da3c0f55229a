#include "fixaudit/sft.hpp"

#include <random>
#include <sstream>

#include "fixaudit/error.hpp"
#include "fixaudit/prompts.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

std::string_view to_string(SftTask t) {
  switch (t) {
    case SftTask::OutputPrediction: return "output_prediction";
    case SftTask::SpecDerivation: return "spec_derivation";
  }
  return "unknown";
}

nlohmann::ordered_json SftSample::to_json() const {
  nlohmann::ordered_json o;
  o["task"] = to_string(task);
  o["prompt"] = prompt;
  o["target"] = target;
  o["final_answer"] = final_answer;
  o["problem_id"] = problem_id;
  o["test_input"] = test_input;
  return o;
}

namespace {

constexpr std::string_view kProgramMarker = "### Program";

/// Test inputs of a problem in a seeded order; drawing from the front is
/// sampling without replacement.
std::vector<std::string> input_pool(const Problem& p, std::uint64_t seed) {
  std::vector<std::string> inputs;
  for (const auto& t : p.public_tests) inputs.push_back(t.input);
  for (const auto& t : p.hidden_tests) inputs.push_back(t.input);
  std::mt19937_64 rng(seed ^ std::stoull(sha256_hex(p.id).substr(0, 16), nullptr, 16));
  stable_shuffle(inputs, rng);
  return inputs;
}

GenerationRequest request(Role role, std::string prompt) {
  GenerationRequest r;
  r.role = role;
  r.prompt = std::move(prompt);
  return r;
}

}  // namespace

SftBuildReport build_output_prediction_samples(const Corpus& corpus, ModelGateway& candidate_model,
                                               ModelGateway& teacher, std::size_t per_problem, std::uint64_t seed) {
  SftBuildReport report;
  for (const auto& p : corpus.problems) {
    if (per_problem == 0) break;
    if (!p.checkable()) {
      report.uncheckable.push_back(p.id);
      continue;
    }
    const auto inputs = input_pool(p, seed);
    if (inputs.size() < per_problem) report.exhausted.push_back(p.id);
    for (std::size_t i = 0; i < std::min(per_problem, inputs.size()); ++i) {
      std::string program;
      try {
        program = parse_program(candidate_model.generate(request(Role::Base, build_base_prompt(p.spec))).text);
      } catch (const ParseError&) {
        ++report.candidate_parse_failures;
        continue;
      }
      SftSample s;
      s.task = SftTask::OutputPrediction;
      s.problem_id = p.id;
      s.test_input = inputs[i];
      s.program = program;
      s.prompt = build_output_prediction_prompt(program, inputs[i]);
      s.target = teacher.generate(request(Role::SftTeacher, s.prompt)).text;
      const auto answer = extract_final_answer(s.target);
      if (!answer) {
        ++report.teacher_parse_failures;
        continue;
      }
      s.final_answer = *answer;
      report.samples.push_back(std::move(s));
    }
  }
  return report;
}

SftBuildReport build_spec_derivation_samples(const Corpus& corpus, ModelGateway& teacher, std::size_t per_problem,
                                             std::uint64_t seed) {
  SftBuildReport report;
  for (const auto& p : corpus.problems) {
    if (per_problem == 0) break;
    if (!p.checkable()) {
      report.uncheckable.push_back(p.id);
      continue;
    }
    const auto inputs = input_pool(p, seed);
    if (inputs.size() < per_problem) report.exhausted.push_back(p.id);
    for (std::size_t i = 0; i < std::min(per_problem, inputs.size()); ++i) {
      SftSample s;
      s.task = SftTask::SpecDerivation;
      s.problem_id = p.id;
      s.test_input = inputs[i];
      s.prompt = build_spec_derivation_prompt(p.spec, inputs[i]);
      s.target = teacher.generate(request(Role::SftTeacher, s.prompt)).text;
      const auto answer = extract_final_answer(s.target);
      if (!answer) {
        ++report.teacher_parse_failures;
        continue;
      }
      s.final_answer = *answer;
      report.samples.push_back(std::move(s));
    }
  }
  return report;
}

FilterResult rejection_filter(const std::vector<SftSample>& samples, const Corpus& corpus, const Sandbox& sandbox) {
  FilterResult out;
  for (const auto& s : samples) {
    std::string program = s.program;
    if (s.task == SftTask::SpecDerivation) {
      const Problem* p = corpus.find(s.problem_id);
      if (p == nullptr || !p->checkable()) {
        out.rejected.push_back({s, "uncheckable"});
        continue;
      }
      program = *p->reference_solution;
    }
    const auto truth = sandbox.run(program, s.test_input);
    if (!truth.ok()) {
      out.rejected.push_back({s, "ground_truth_failed"});
    } else if (!sandbox.same_output(s.final_answer, truth.stdout_text)) {
      out.rejected.push_back({s, "wrong_answer"});
    } else {
      out.kept.push_back(s);
    }
  }
  return out;
}

std::string mix_and_emit(const std::vector<SftSample>& a, const std::vector<SftSample>& b, std::uint64_t seed) {
  std::vector<const SftSample*> all;
  for (const auto& s : a) all.push_back(&s);
  for (const auto& s : b) all.push_back(&s);
  std::mt19937_64 rng(seed);
  stable_shuffle(all, rng);
  std::ostringstream out;
  for (const auto* s : all) out << s->to_json().dump() << '\n';
  return out.str();
}

std::vector<std::string> check_task_hygiene(const std::vector<SftSample>& samples, const Corpus& corpus) {
  std::vector<std::string> violations;
  for (const auto& s : samples) {
    bool ok = true;
    if (s.task == SftTask::OutputPrediction) {
      ok = s.prompt.find(kProgramMarker) != std::string::npos && s.prompt.find(trim(s.program)) != std::string::npos;
    } else {
      ok = s.prompt.find(kProgramMarker) == std::string::npos;
      const Problem* p = corpus.find(s.problem_id);
      if (ok && p != nullptr && p->reference_solution && !trim(*p->reference_solution).empty()) {
        ok = s.prompt.find(trim(*p->reference_solution)) == std::string::npos;
      }
    }
    if (!ok) violations.push_back(s.problem_id + ":" + std::string(to_string(s.task)));
  }
  return violations;
}

}  // namespace fixaudit

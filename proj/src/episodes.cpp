#include "fixaudit/episodes.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::B: return "B";
    case Stage::C: return "C";
    case Stage::D: return "D";
  }
  return "?";
}

Stage stage_from_string(std::string_view name) {
  if (name == "B" || name == "b") return Stage::B;
  if (name == "C" || name == "c") return Stage::C;
  if (name == "D" || name == "d") return Stage::D;
  throw ConfigError("unknown stage '" + std::string(name) + "' (expected B, C or D)");
}

void EpisodeConfig::validate() const {
  if (group_size < 1) throw ContractError("group_size must be >= 1");
  GenerationRequest{Role::Base, {}, temperature, top_p, max_tokens, seed}.validate();
}

nlohmann::ordered_json AuditorArtifact::to_json() const {
  nlohmann::ordered_json o;
  o["problem_id"] = problem_id;
  o["target_id"] = target.id;
  o["target_source"] = target.source;
  auto tests_json = nlohmann::ordered_json::array();
  for (const auto& t : tests) {
    nlohmann::ordered_json e;
    e["parsed"] = t.parsed;
    e["input"] = t.test.input;
    e["expected_output"] = t.test.expected_output.value_or("");
    e["valid"] = t.valid;
    e["reveals"] = t.reveals;
    tests_json.push_back(std::move(e));
  }
  o["tests"] = std::move(tests_json);
  return o;
}

AuditorArtifact AuditorArtifact::from_json(const nlohmann::json& j) {
  AuditorArtifact a;
  a.problem_id = j.at("problem_id").get<std::string>();
  a.target.id = j.at("target_id").get<std::string>();
  a.target.source = j.at("target_source").get<std::string>();
  a.target.stage = CandidateStage::Round1;
  for (const auto& e : j.at("tests")) {
    ArtifactTest t;
    t.parsed = e.at("parsed").get<bool>();
    t.test.input = e.at("input").get<std::string>();
    t.test.expected_output = e.at("expected_output").get<std::string>();
    t.test.provenance = Provenance::Auditor;
    t.test.cycle = 1;
    t.valid = e.at("valid").get<bool>();
    t.reveals = e.at("reveals").get<bool>();
    a.tests.push_back(std::move(t));
  }
  return a;
}

void write_auditor_artifacts(const std::vector<AuditorArtifact>& artifacts, std::ostream& out) {
  for (const auto& a : artifacts) out << a.to_json().dump() << '\n';
}

std::vector<AuditorArtifact> read_auditor_artifacts(std::istream& in) {
  std::vector<AuditorArtifact> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(AuditorArtifact::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error("auditor artifacts line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::optional<std::size_t> choose_round2_hint(const AuditorArtifact& artifact) {
  const auto& t = artifact.tests;
  auto first = [&](auto pred) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (pred(t[i])) return i;
    }
    return std::nullopt;
  };
  if (auto i = first([](const ArtifactTest& a) { return a.parsed && a.reveals; })) return i;
  if (auto i = first([](const ArtifactTest& a) { return a.parsed && a.valid; })) return i;
  return first([](const ArtifactTest& a) { return a.parsed; });
}

namespace {

class EpisodeRunner {
 public:
  EpisodeRunner(ModelGateway& model, const Sandbox& sandbox, const EpisodeConfig& config, EpisodeReport& report)
      : model_(model), sandbox_(sandbox), config_(config), report_(report) {}

  std::string call(Role role, const std::string& prompt) {
    GenerationRequest req;
    req.role = role;
    req.prompt = prompt;
    req.temperature = config_.temperature;
    req.top_p = config_.top_p;
    req.max_tokens = config_.max_tokens;
    if (config_.seed) req.seed = *config_.seed + calls_;
    ++calls_;
    return model_.generate(req).text;
  }

  std::optional<std::string> try_program(const std::string& response) {
    try {
      return parse_program(response);
    } catch (const ParseError&) {
      return std::nullopt;
    }
  }

  /// Initial candidate for a problem, or nullopt after recording a skip.
  std::optional<std::string> base_candidate(const Problem& p) {
    auto src = try_program(call(Role::Base, build_base_prompt(p.spec)));
    if (!src) skip(p, "base candidate did not parse");
    return src;
  }

  std::optional<std::size_t> first_failing_public(const Problem& p, const std::string& program) {
    for (std::size_t i = 0; i < p.public_tests.size(); ++i) {
      if (!sandbox_.passes(program, p.public_tests[i], p.reference_solution)) return i;
    }
    return std::nullopt;
  }

  bool regressed(const Problem& p, const std::string& before, const std::string& after) {
    const auto tests = all_tests(p);
    const auto ids = all_test_ids(p);
    const auto reg = collect_regression_set(before, tests, ids, p.reference_solution, sandbox_);
    const PassVector original(reg.test_ids, std::vector<bool>(reg.tests.size(), true));
    return regression(original, pass_vector(p, after, reg));
  }

  PassVector hidden_vector(const Problem& p, const std::string& program) {
    std::vector<std::string> ids;
    std::vector<bool> passed;
    for (std::size_t i = 0; i < p.hidden_tests.size(); ++i) {
      ids.push_back(test_id(Provenance::Hidden, i));
      passed.push_back(sandbox_.passes(program, p.hidden_tests[i], p.reference_solution));
    }
    return PassVector(std::move(ids), std::move(passed));
  }

  void skip(const Problem& p, std::string reason) { report_.skipped.push_back({p.id, std::move(reason)}); }

  SampleGroup open_group(const Problem& p, Role role, Stage stage, std::string prompt) {
    SampleGroup g;
    g.group_id = p.id + "/" + std::string(to_string(stage));
    g.problem_id = p.id;
    g.role = role;
    g.prompt = std::move(prompt);
    return g;
  }

  void reward(const Problem& p, Role role, Stage stage, double value,
              std::vector<std::pair<std::string, nlohmann::ordered_json>> components, SampleGroup& group) {
    group.rewards.push_back(value);
    report_.rewards.push_back({p.id, std::string(to_string(role)), std::string(to_string(stage)), value,
                               std::move(components)});
  }

  void stage_b(const Problem& p);
  void stage_c(const Problem& p);
  void stage_d(const Problem& p, const AuditorArtifact& artifact);

 private:
  PassVector pass_vector(const Problem& p, const std::string& program, const RegressionSet& reg) {
    std::vector<bool> passed;
    for (const auto& t : reg.tests) passed.push_back(sandbox_.passes(program, t, p.reference_solution));
    return PassVector(reg.test_ids, std::move(passed));
  }

  ModelGateway& model_;
  const Sandbox& sandbox_;
  const EpisodeConfig& config_;
  EpisodeReport& report_;
  std::uint64_t calls_ = 0;
};

void EpisodeRunner::stage_b(const Problem& p) {
  const auto base = base_candidate(p);
  if (!base) return;
  const auto failing = first_failing_public(p, *base);
  if (!failing) {
    skip(p, "base candidate passes every public test");
    return;
  }
  const auto& x_f = p.public_tests[*failing];
  const auto observed = sandbox_.run(*base, x_f.input);
  auto group = open_group(p, Role::FixerR1, Stage::B,
                          build_fixer_r1_prompt(p.spec, *base, x_f, observed, config_.include_observed_output));
  for (std::size_t i = 0; i < config_.group_size; ++i) {
    auto response = call(Role::FixerR1, group.prompt);
    const auto repaired = try_program(response);
    group.responses.push_back(std::move(response));
    if (!repaired) {
      reward(p, Role::FixerR1, Stage::B, 0.0, {{"parsed", false}}, group);
      continue;
    }
    const bool fixes = sandbox_.passes(*repaired, x_f, p.reference_solution);
    const bool reg = regressed(p, *base, *repaired);
    reward(p, Role::FixerR1, Stage::B, fixer_round1_reward(fixes, reg),
           {{"parsed", true}, {"passes_failing_test", fixes}, {"regressed", reg}}, group);
  }
  report_.groups.push_back(std::move(group));
}

void EpisodeRunner::stage_c(const Problem& p) {
  const auto base = base_candidate(p);
  if (!base) return;

  std::vector<Candidate> repairs;
  if (const auto failing = first_failing_public(p, *base)) {
    const auto& x_f = p.public_tests[*failing];
    const auto prompt =
        build_fixer_r1_prompt(p.spec, *base, x_f, sandbox_.run(*base, x_f.input), config_.include_observed_output);
    for (std::size_t i = 0; i < config_.group_size; ++i) {
      if (auto src = try_program(call(Role::FixerR1, prompt))) {
        repairs.push_back({"r1." + std::to_string(i), *src, CandidateStage::Round1, std::string("base"), 1});
      }
    }
  }
  // The first parsed repair is the target; the rest may serve as auxiliary candidates.
  Candidate target = repairs.empty() ? Candidate{"base", *base, CandidateStage::Initial, std::nullopt, 1} : repairs[0];
  const std::span<const Candidate> others =
      repairs.empty() ? std::span<const Candidate>{} : std::span<const Candidate>(repairs).subspan(1);
  const auto aux = build_auxiliary_pool(others, p, config_.aux_k, sandbox_);

  auto group = open_group(p, Role::Auditor, Stage::C, build_auditor_prompt(p.spec, target.source, config_.auditor_mode));
  AuditorArtifact artifact{p.id, target, {}};
  for (std::size_t i = 0; i < config_.group_size; ++i) {
    auto response = call(Role::Auditor, group.prompt);
    ArtifactTest entry;
    try {
      entry.test = parse_test_case(response, 1);
    } catch (const ParseError&) {
      entry.parsed = false;
    }
    group.responses.push_back(std::move(response));
    if (!entry.parsed) {
      reward(p, Role::Auditor, Stage::C, 0.0, {{"parsed", false}}, group);
      artifact.tests.push_back(std::move(entry));
      continue;
    }
    const auto& y = *entry.test.expected_output;
    const auto ref = sandbox_.run(*p.reference_solution, entry.test.input);
    entry.valid = test_validity(y, ref, sandbox_.policy());
    entry.reveals = test_reveals(entry.valid, sandbox_.run(target.source, entry.test.input), y, sandbox_.policy());
    std::vector<bool> aux_reveals;
    for (const auto& c : aux.candidates) {
      aux_reveals.push_back(test_reveals(entry.valid, sandbox_.run(c.source, entry.test.input), y, sandbox_.policy()));
    }
    reward(p, Role::Auditor, Stage::C, auditor_reward(entry.valid, entry.reveals, aux_reveals),
           {{"parsed", true},
            {"valid", entry.valid},
            {"reveals_target", entry.reveals},
            {"aux_reveals", aux_reveals},
            {"aux_k", aux.k()}},
           group);
    artifact.tests.push_back(std::move(entry));
  }
  report_.groups.push_back(std::move(group));
  report_.artifacts.push_back(std::move(artifact));
}

void EpisodeRunner::stage_d(const Problem& p, const AuditorArtifact& artifact) {
  const auto hint = choose_round2_hint(artifact);
  if (!hint) {
    skip(p, "no parsed auditor test in the stage C artifact");
    return;
  }
  const auto& target = artifact.target.source;
  const auto before = hidden_vector(p, target);
  auto group = open_group(p, Role::FixerR2, Stage::D, build_fixer_r2_prompt(p.spec, target, artifact.tests[*hint].test));
  for (std::size_t i = 0; i < config_.group_size; ++i) {
    auto response = call(Role::FixerR2, group.prompt);
    const auto refined = try_program(response);
    group.responses.push_back(std::move(response));
    if (!refined) {
      reward(p, Role::FixerR2, Stage::D, 0.0, {{"parsed", false}}, group);
      continue;
    }
    const bool reg = regressed(p, target, *refined);
    const auto after = hidden_vector(p, *refined);
    const auto delta = hidden_improvement(before, after);
    reward(p, Role::FixerR2, Stage::D, fixer_round2_reward(reg, delta, after.all()),
           {{"parsed", true},
            {"regressed", reg},
            {"delta_hidden", delta},
            {"hidden_passed", after.count()},
            {"all_pass", after.all()}},
           group);
  }
  report_.groups.push_back(std::move(group));
}

}  // namespace

EpisodeReport generate_stage_episodes(Stage stage, const Corpus& corpus, ModelGateway& model, const Sandbox& sandbox,
                                      const EpisodeConfig& config, const std::vector<AuditorArtifact>& artifacts) {
  config.validate();
  EpisodeReport report;
  EpisodeRunner runner(model, sandbox, config, report);
  for (const auto& p : corpus.problems) {
    if (!p.checkable()) {
      runner.skip(p, "uncheckable: no reference solution");
      continue;
    }
    if (p.hidden_tests.empty()) {
      runner.skip(p, "no hidden tests");
      continue;
    }
    try {
      switch (stage) {
        case Stage::B: runner.stage_b(p); break;
        case Stage::C: runner.stage_c(p); break;
        case Stage::D: {
          const auto it = std::find_if(artifacts.begin(), artifacts.end(),
                                       [&](const AuditorArtifact& a) { return a.problem_id == p.id; });
          if (it == artifacts.end()) {
            runner.skip(p, "no stage C artifact");
          } else {
            runner.stage_d(p, *it);
          }
          break;
        }
      }
    } catch (const UncheckableError& e) {
      runner.skip(p, std::string("uncheckable: ") + e.what());
    }
  }
  return report;
}

}  // namespace fixaudit

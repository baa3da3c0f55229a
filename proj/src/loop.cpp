#include "fixaudit/loop.hpp"

#include <algorithm>
#include <sstream>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

std::string_view to_string(CycleStrategy s) {
  switch (s) {
    case CycleStrategy::FreshBase: return "fresh-base";
    case CycleStrategy::Continue: return "continue";
  }
  return "unknown";
}

CycleStrategy cycle_strategy_from_string(std::string_view name) {
  if (name == "fresh-base") return CycleStrategy::FreshBase;
  if (name == "continue") return CycleStrategy::Continue;
  throw ConfigError("unknown cycle strategy '" + std::string(name) + "'");
}

void LoopConfig::validate() const {
  if (budget < 4) throw ContractError("invocation budget must be >= 4");
  if (max_cycles < 1) throw ContractError("max_cycles must be >= 1");
  GenerationRequest{Role::Base, {}, temperature, top_p, max_tokens, seed}.validate();
}

const std::vector<TestCase>& ProblemView::hidden_tests() const {
  if (mode_ == RunMode::Inference) throw ContractError("hidden tests are not readable during inference");
  ++hidden_reads_;
  return problem_->hidden_tests;
}

const std::optional<std::string>& ProblemView::reference() const {
  if (mode_ == RunMode::Inference) throw ContractError("the reference solution is not readable during inference");
  ++reference_reads_;
  return problem_->reference_solution;
}

Selection select_final(std::span<const SelectionRow> rows) {
  if (rows.empty()) return {std::nullopt, "empty pool"};
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].public_passed != rows[i].public_total) continue;
    if (!best || rows[i].auditor_passed >= rows[best.value()].auditor_passed) best = i;
  }
  if (best) {
    return {best, "passes all " + std::to_string(rows[*best].public_total) + " public tests and " +
                      std::to_string(rows[*best].auditor_passed) + " valid auditor tests"};
  }
  std::size_t fallback = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].public_passed >= rows[fallback].public_passed) fallback = i;
  }
  return {fallback, "no candidate passes all public tests; highest public-pass count " +
                        std::to_string(rows[fallback].public_passed) + "/" +
                        std::to_string(rows[fallback].public_total)};
}

nlohmann::ordered_json TraceStep::to_json() const {
  nlohmann::ordered_json o;
  o["type"] = "step";
  o["cycle"] = cycle;
  o["kind"] = kind;
  o["role"] = to_string(role);
  o["invoked"] = invoked;
  if (invoked) {
    o["invocation"] = invocation;
    o["prompt_sha256"] = prompt_sha256;
    o["response_sha256"] = response_sha256;
  }
  o["outcome"] = outcome;
  if (!detail.empty()) o["detail"] = detail;
  if (candidate_id) o["candidate_id"] = *candidate_id;
  if (test_index) o["test_index"] = *test_index;
  if (!public_passed.empty()) o["public_passed"] = public_passed;
  if (!rewards.is_null()) o["rewards"] = rewards;
  return o;
}

const Candidate* LoopTrace::find_candidate(const std::string& id) const {
  for (const auto& c : candidates) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::string LoopTrace::to_jsonl() const {
  std::ostringstream out;
  for (const auto& s : steps) out << s.to_json().dump() << '\n';
  for (const auto& c : candidates) {
    nlohmann::ordered_json o;
    o["type"] = "candidate";
    o["id"] = c.id;
    o["stage"] = to_string(c.stage);
    o["parent"] = c.parent ? nlohmann::ordered_json(*c.parent) : nlohmann::ordered_json(nullptr);
    o["cycle"] = c.cycle;
    o["source"] = c.source;
    out << o.dump() << '\n';
  }
  for (std::size_t i = 0; i < auditor_tests.size(); ++i) {
    nlohmann::ordered_json o;
    o["type"] = "auditor_test";
    o["index"] = i;
    o["cycle"] = auditor_tests[i].cycle;
    o["input"] = auditor_tests[i].input;
    o["expected_output"] = auditor_tests[i].expected_output.value_or("");
    o["counts_for_selection"] = static_cast<bool>(auditor_valid[i]);
    out << o.dump() << '\n';
  }
  for (const auto& p : pool) {
    nlohmann::ordered_json o;
    o["type"] = "pool";
    o["candidate_id"] = p.candidate_id;
    o["cycle"] = p.cycle;
    o["public_passed"] = p.public_passed;
    o["public_total"] = p.public_total;
    o["auditor_passed"] = p.auditor_passed;
    out << o.dump() << '\n';
  }
  nlohmann::ordered_json sel;
  sel["type"] = "selection";
  sel["candidate_id"] = selected.id;
  sel["rationale"] = selection_rationale;
  out << sel.dump() << '\n';
  nlohmann::ordered_json sum;
  sum["type"] = "summary";
  sum["problem_id"] = problem_id;
  sum["invocations_used"] = invocations_used;
  sum["cycles_completed"] = cycles_completed;
  sum["invocations_per_cycle"] = invocations_per_cycle;
  sum["stopped_early"] = stopped_early;
  sum["hidden_reads"] = hidden_reads;
  sum["reference_reads"] = reference_reads;
  out << sum.dump() << '\n';
  return out.str();
}

namespace {

std::vector<bool> public_pass_flags(const ProblemView& problem, const Candidate& c, const Sandbox& sandbox) {
  std::vector<bool> flags;
  for (const auto& t : problem.public_tests()) {
    flags.push_back(!c.is_sentinel() && sandbox.passes(c.source, t, std::nullopt));
  }
  return flags;
}

std::size_t count_true(const std::vector<bool>& v) {
  return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
}

std::optional<std::size_t> best_public(const std::vector<PoolEntry>& pool) {
  std::optional<std::size_t> best;
  for (const auto& e : pool) best = std::max(best.value_or(0), e.public_passed);
  return best;
}

/// Executes one model call and records it on `step`.
class Invoker {
 public:
  Invoker(CycleState& state, const LoopContext& ctx) : state_(state), ctx_(ctx) {}

  std::string operator()(Role role, const std::string& prompt, TraceStep& step) {
    GenerationRequest req;
    req.role = role;
    req.prompt = prompt;
    req.temperature = ctx_.config.temperature;
    req.top_p = ctx_.config.top_p;
    req.max_tokens = ctx_.config.max_tokens;
    if (ctx_.config.seed) req.seed = *ctx_.config.seed + state_.invocations_used;
    ++state_.invocations_used;
    step.invoked = true;
    step.invocation = state_.invocations_used;
    step.prompt_sha256 = sha256_hex(prompt);
    auto response = ctx_.model.generate(req);
    step.response_sha256 = sha256_hex(response.text);
    return std::move(response.text);
  }

  std::size_t remaining() const { return ctx_.config.budget - state_.invocations_used; }

 private:
  CycleState& state_;
  const LoopContext& ctx_;
};

bool in_pool(const CycleState& state, const std::string& id) {
  return std::any_of(state.candidate_pool.begin(), state.candidate_pool.end(),
                     [&](const PoolEntry& e) { return e.candidate.id == id; });
}

void add_to_pool(CycleState& state, const Candidate& c, const std::vector<bool>& public_flags) {
  if (c.is_sentinel() || in_pool(state, c.id)) return;
  state.candidate_pool.push_back({c, count_true(public_flags), public_flags.size()});
}

PassVector pass_vector_over(const std::string& program, const std::vector<TestCase>& tests,
                            const std::vector<std::string>& ids, const std::optional<std::string>& reference,
                            const Sandbox& sandbox) {
  std::vector<bool> passed;
  for (const auto& t : tests) passed.push_back(!trim(program).empty() && sandbox.passes(program, t, reference));
  return PassVector(ids, std::move(passed));
}

/// Reward bookkeeping available only in training mode.
struct TrainingOracle {
  const ProblemView& problem;
  const Sandbox& sandbox;

  std::vector<TestCase> tests() const {
    std::vector<TestCase> all = problem.public_tests();
    const auto& hidden = problem.hidden_tests();
    all.insert(all.end(), hidden.begin(), hidden.end());
    return all;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < problem.public_tests().size(); ++i) out.push_back(test_id(Provenance::Public, i));
    for (std::size_t i = 0; i < problem.hidden_tests().size(); ++i) out.push_back(test_id(Provenance::Hidden, i));
    return out;
  }

  /// Regress(before -> after) over T_reg(before).
  bool regressed(const std::string& before, const std::string& after) const {
    const auto all = tests();
    const auto all_ids = ids();
    const auto reg = collect_regression_set(before, all, all_ids, problem.reference(), sandbox);
    const PassVector original(reg.test_ids, std::vector<bool>(reg.tests.size(), true));
    return regression(original, pass_vector_over(after, reg.tests, reg.test_ids, problem.reference(), sandbox));
  }

  PassVector hidden_vector(const std::string& program) const {
    const auto& hidden = problem.hidden_tests();
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < hidden.size(); ++i) ids.push_back(test_id(Provenance::Hidden, i));
    return pass_vector_over(program, hidden, ids, problem.reference(), sandbox);
  }
};

}  // namespace

std::size_t cycle_cost(const CycleState& state, const LoopConfig& config) {
  if (state.cycle_index == 0) return 4;
  return config.strategy == CycleStrategy::FreshBase ? 4 : 3;
}

CycleState run_cycle(const ProblemView& problem, CycleState state, const LoopContext& ctx, LoopTrace& trace) {
  const auto& config = ctx.config;
  const auto& sandbox = ctx.sandbox;
  const bool training = config.mode == RunMode::Training;
  Invoker invoke(state, ctx);

  const int cycle = ++state.cycle_index;
  const std::size_t used_before = state.invocations_used;
  const auto best_before = best_public(state.candidate_pool);
  const std::string prefix = "c" + std::to_string(cycle);
  std::size_t spare = 0;

  auto new_step = [&](std::string kind, Role role) {
    TraceStep s;
    s.cycle = cycle;
    s.kind = std::move(kind);
    s.role = role;
    return s;
  };
  auto skip = [&](TraceStep s, std::string why) {
    s.outcome = "skipped";
    s.detail = std::move(why);
    trace.steps.push_back(std::move(s));
  };

  // 1. base generation
  const bool regenerate =
      cycle == 1 || (config.strategy == CycleStrategy::FreshBase && !state.improved_last_cycle);
  if (regenerate) {
    auto step = new_step("base", Role::Base);
    if (invoke.remaining() == 0) {
      skip(std::move(step), "budget exhausted");
    } else {
      const auto text = invoke(Role::Base, build_base_prompt(problem.spec()), step);
      try {
        Candidate c{prefix + ".base", parse_program(text), CandidateStage::Initial, std::nullopt, cycle};
        state.current = c;
        trace.candidates.push_back(c);
        step.outcome = "candidate";
        step.candidate_id = c.id;
        step.public_passed = public_pass_flags(problem, c, sandbox);
      } catch (const ParseError& e) {
        step.outcome = "parse_error";
        step.detail = e.what();
      }
      trace.steps.push_back(std::move(step));
    }
  } else if (config.strategy == CycleStrategy::FreshBase) {
    ++spare;
  }

  // 2. Round-1 fix against the first failing public test
  {
    auto step = new_step("fixer_r1", Role::FixerR1);
    const auto flags = public_pass_flags(problem, state.current, sandbox);
    const auto failing = std::find(flags.begin(), flags.end(), false);
    if (state.current.is_sentinel()) {
      skip(std::move(step), "no candidate to repair");
    } else if (failing == flags.end()) {
      if (config.strategy == CycleStrategy::FreshBase) ++spare;
      add_to_pool(state, state.current, flags);
      skip(std::move(step), "candidate passes every public test");
    } else if (invoke.remaining() == 0) {
      add_to_pool(state, state.current, flags);
      skip(std::move(step), "budget exhausted");
    } else {
      const auto& x_f = problem.public_tests()[static_cast<std::size_t>(failing - flags.begin())];
      const auto observed = sandbox.run(state.current.source, x_f.input);
      const auto prompt =
          build_fixer_r1_prompt(problem.spec(), state.current.source, x_f, observed, config.include_observed_output);
      const auto text = invoke(Role::FixerR1, prompt, step);
      try {
        Candidate repaired{prefix + ".r1", parse_program(text), CandidateStage::Round1, state.current.id, cycle};
        const auto repaired_flags = public_pass_flags(problem, repaired, sandbox);
        if (training) {
          TrainingOracle oracle{problem, sandbox};
          const bool fixes = sandbox.passes(repaired.source, x_f, problem.reference());
          const bool regressed = oracle.regressed(state.current.source, repaired.source);
          step.rewards["passes_failing_test"] = fixes;
          step.rewards["regressed"] = regressed;
          step.rewards["r_fix1"] = fixer_round1_reward(fixes, regressed);
        }
        trace.candidates.push_back(repaired);
        add_to_pool(state, repaired, repaired_flags);
        state.current = repaired;
        step.outcome = "candidate";
        step.candidate_id = repaired.id;
        step.public_passed = repaired_flags;
      } catch (const ParseError& e) {
        add_to_pool(state, state.current, flags);
        step.outcome = "parse_error";
        step.detail = e.what();
      }
      trace.steps.push_back(std::move(step));
    }
  }

  // 3. auditor probe(s) against the current candidate
  std::vector<std::size_t> new_tests;
  const std::size_t probes = 1 + spare;
  for (std::size_t p = 0; p < probes; ++p) {
    auto step = new_step("auditor", Role::Auditor);
    if (state.current.is_sentinel()) {
      skip(std::move(step), "no candidate to audit");
      break;
    }
    if (invoke.remaining() == 0) {
      skip(std::move(step), "budget exhausted");
      break;
    }
    const auto text =
        invoke(Role::Auditor, build_auditor_prompt(problem.spec(), state.current.source, config.auditor_mode), step);
    try {
      TestCase test = parse_test_case(text, cycle);
      bool counts = true;
      if (training) {
        const auto ref = sandbox.run(problem.reference().value_or(""), test.input);
        const bool valid = problem.reference() && test_validity(*test.expected_output, ref, sandbox.policy());
        const bool reveals =
            test_reveals(valid, sandbox.run(state.current.source, test.input), *test.expected_output, sandbox.policy());
        step.rewards["valid"] = valid;
        step.rewards["reveals_target"] = reveals;
        step.rewards["r_audit"] = auditor_reward(valid, reveals, std::vector<bool>{});
        counts = valid;
      }
      const std::size_t index = state.auditor_tests.size();
      state.auditor_tests.push_back(test);
      trace.auditor_tests.push_back(test);
      trace.auditor_valid.push_back(counts);
      new_tests.push_back(index);
      step.outcome = "test";
      step.test_index = index;
      step.candidate_id = state.current.id;
    } catch (const ParseError& e) {
      step.outcome = "parse_error";
      step.detail = e.what();
    }
    trace.steps.push_back(std::move(step));
  }

  // 4. Round-2 fix with an auditor test as the hint
  {
    auto step = new_step("fixer_r2", Role::FixerR2);
    std::optional<std::size_t> hint;
    for (std::size_t idx : new_tests) {
      if (!sandbox.passes(state.current.source, state.auditor_tests[idx], std::nullopt)) {
        hint = idx;
        break;
      }
    }
    if (state.current.is_sentinel()) {
      skip(std::move(step), "no candidate to repair");
    } else if (new_tests.empty()) {
      skip(std::move(step), "no auditor test this cycle");
    } else if (!hint) {
      const auto flags = public_pass_flags(problem, state.current, sandbox);
      if (count_true(flags) == flags.size()) state.stopped = true;
      skip(std::move(step), "candidate agrees with every auditor test");
    } else if (invoke.remaining() == 0) {
      skip(std::move(step), "budget exhausted");
    } else {
      const auto& test = state.auditor_tests[*hint];
      const auto text = invoke(Role::FixerR2, build_fixer_r2_prompt(problem.spec(), state.current.source, test), step);
      step.test_index = *hint;
      try {
        Candidate refined{prefix + ".r2", parse_program(text), CandidateStage::Round2, state.current.id, cycle};
        const auto flags = public_pass_flags(problem, refined, sandbox);
        if (training) {
          TrainingOracle oracle{problem, sandbox};
          const bool regressed = oracle.regressed(state.current.source, refined.source);
          const auto before = oracle.hidden_vector(state.current.source);
          const auto after = oracle.hidden_vector(refined.source);
          const auto delta = hidden_improvement(before, after);
          step.rewards["regressed"] = regressed;
          step.rewards["delta_hidden"] = delta;
          step.rewards["all_pass"] = after.all();
          step.rewards["r_fix2"] = fixer_round2_reward(regressed, delta, after.all());
        }
        trace.candidates.push_back(refined);
        add_to_pool(state, refined, flags);
        state.current = refined;
        step.outcome = "candidate";
        step.candidate_id = refined.id;
        step.public_passed = flags;
      } catch (const ParseError& e) {
        step.outcome = "parse_error";
        step.detail = e.what();
      }
      trace.steps.push_back(std::move(step));
    }
  }

  const auto best_after = best_public(state.candidate_pool);
  state.improved_last_cycle = best_after && (!best_before || *best_after > *best_before);
  trace.invocations_per_cycle.push_back(state.invocations_used - used_before);
  trace.cycles_completed = static_cast<std::size_t>(cycle);
  return state;
}

Selection replay_selection(const LoopTrace& trace, std::optional<int> cycle) {
  std::vector<SelectionRow> rows;
  std::vector<std::size_t> pool_index;
  for (std::size_t i = 0; i < trace.pool.size(); ++i) {
    const auto& p = trace.pool[i];
    if (cycle && p.cycle > *cycle) continue;
    SelectionRow row{p.public_passed, p.public_total, 0};
    for (std::size_t t = 0; t < trace.auditor_tests.size(); ++t) {
      if (cycle && trace.auditor_tests[t].cycle > *cycle) continue;
      if (trace.auditor_valid[t] && p.auditor_passed[t]) ++row.auditor_passed;
    }
    rows.push_back(row);
    pool_index.push_back(i);
  }
  auto sel = select_final(rows);
  if (sel.index) sel.index = pool_index[*sel.index];
  return sel;
}

PipelineResult run_pipeline(const Problem& problem, const LoopContext& ctx) {
  ctx.config.validate();
  if (ctx.config.mode == RunMode::Training && !problem.checkable()) {
    throw UncheckableError("training mode needs a reference solution for problem '" + problem.id + "'");
  }
  const ProblemView view(problem, ctx.config.mode);
  LoopTrace trace;
  trace.problem_id = problem.id;
  CycleState state;
  state.problem_id = problem.id;

  while (!state.stopped && static_cast<std::size_t>(state.cycle_index) < ctx.config.max_cycles &&
         ctx.config.budget - state.invocations_used >= cycle_cost(state, ctx.config)) {
    state = run_cycle(view, std::move(state), ctx, trace);
  }

  for (const auto& entry : state.candidate_pool) {
    PoolRecord rec{entry.candidate.id, entry.candidate.cycle, entry.public_passed, entry.public_total, {}};
    for (const auto& test : state.auditor_tests) {
      rec.auditor_passed.push_back(ctx.sandbox.passes(entry.candidate.source, test, std::nullopt));
    }
    trace.pool.push_back(std::move(rec));
  }
  const auto sel = replay_selection(trace);
  trace.selected = sel.index ? state.candidate_pool[*sel.index].candidate : Candidate::sentinel();
  trace.selection_rationale = sel.rationale;
  trace.invocations_used = state.invocations_used;
  trace.stopped_early = state.stopped;
  trace.hidden_reads = view.hidden_reads();
  trace.reference_reads = view.reference_reads();
  return {trace.selected, std::move(trace)};
}

}  // namespace fixaudit

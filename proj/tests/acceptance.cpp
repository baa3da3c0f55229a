// Acceptance checks: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "fixaudit/cli.hpp"
#include "fixaudit/dapo.hpp"
#include "fixaudit/loop.hpp"
#include "fixaudit/metrics.hpp"
#include "fixaudit/reward.hpp"
#include "fixture_support.hpp"
#include "oracles.hpp"

using namespace fixaudit;
using namespace fixaudit::testing;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string why;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why = what;
    }
  }
};

PassVector pv(const std::vector<bool>& v) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < v.size(); ++i) ids.push_back(test_id(Provenance::Hidden, i));
  return PassVector(ids, v);
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

PipelineResult run_loop(const Problem& p, const nlohmann::json& script, const LoopConfig& config) {
  ModelGateway gw(ScriptedBackend::from_json(script));
  const Sandbox sb;
  return run_pipeline(p, LoopContext{gw, sb, config});
}

Check reward_oracle() {
  Check c;
  const auto start = std::chrono::steady_clock::now();
  constexpr std::size_t n = 8;
  for (std::uint32_t before = 0; before < (1u << n); ++before) {
    for (std::uint32_t after = 0; after < (1u << n); ++after) {
      const auto b = pv(bits(before, n));
      const auto a = pv(bits(after, n));
      c.require(regression(b, a) == oracle_regression(before, after), fmt::format("regression {} {}", before, after));
      c.require(hidden_improvement(b, a) == oracle_hidden_improvement(before, after),
                fmt::format("delta {} {}", before, after));
    }
  }
  c.require(seconds_since(start) < 1.0, "slower than 1 s");
  return c;
}

Check reward_tables() {
  Check c;
  const auto start = std::chrono::steady_clock::now();
  c.require(fixer_round1_reward(true, false) == 1.0, "R_fix1(true,false)");
  for (bool fixes : {false, true}) {
    for (bool reg : {false, true}) {
      c.require(fixer_round1_reward(fixes, reg) == ((fixes && !reg) ? 1.0 : 0.0), "R_fix1 table");
    }
  }
  c.require(auditor_reward(true, true, std::vector<bool>{false, false, false, false}) == 1.0, "R_audit 1.0");
  c.require(auditor_reward(true, false, std::vector<bool>{true, true, false, false}) == 0.2, "R_audit 0.2");
  for (std::uint32_t mask = 0; mask < 16; ++mask) {
    const auto aux = bits(mask, 4);
    for (bool reveal : {false, true}) {
      c.require(auditor_reward(false, reveal, aux) == 0.0, "invalid test scored");
      const double expected = (reveal ? 10 : 0) / 10.0 + std::popcount(mask) / 10.0;
      c.require(std::abs(auditor_reward(true, reveal, aux) - expected) < 1e-15, "R_audit table");
    }
  }
  c.require(fixer_round2_reward(false, 3, false) == 0.3, "R_fix2 0.3");
  c.require(fixer_round2_reward(false, 15, true) == 2.0, "R_fix2 2.0");
  for (std::size_t d = 0; d <= 20; ++d) {
    for (bool all : {false, true}) {
      c.require(fixer_round2_reward(true, d, all) == 0.0, "regression gate");
      const double expected = std::min<std::size_t>(d, 10) / 10.0 + (all ? 1.0 : 0.0);
      c.require(std::abs(fixer_round2_reward(false, d, all) - expected) < 1e-15, "R_fix2 table");
    }
  }
  c.require(seconds_since(start) < 1.0, "slower than 1 s");
  return c;
}

Check dapo_suite() {
  Check c;
  const auto start = std::chrono::steady_clock::now();
  const auto a = group_advantages(std::vector<double>{1, 0, 0, 1}, 0.0);
  const std::vector<double> want{1, -1, -1, 1};
  for (std::size_t i = 0; i < 4; ++i) c.require(std::abs(a[i] - want[i]) <= 1e-9, "[1,0,0,1] advantages");

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 2.0), ua(-2.0, 2.0), ur(0.5, 1.6);
  for (int g = 0; g < 1000; ++g) {
    std::vector<double> r(2 + rng() % 15);
    for (auto& x : r) x = u(rng);
    const auto adv = group_advantages(r);
    c.require(std::abs(std::accumulate(adv.begin(), adv.end(), 0.0)) <= 1e-9 * r.size(), "advantage sum");
  }
  const ClipBounds sym{0.2, 0.2};
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> ratios(8), adv(8);
    for (auto& x : ratios) x = ur(rng);
    for (auto& x : adv) x = ua(rng);
    double ppo = 0;
    for (std::size_t i = 0; i < 8; ++i) ppo += std::min(ratios[i] * adv[i], std::clamp(ratios[i], 0.8, 1.2) * adv[i]);
    c.require(std::abs(dapo_objective(ratios, adv, sym) - ppo / 8) <= 1e-12, "symmetric clip");
  }
  const ClipBounds bounds;
  std::uniform_real_distribution<double> inside(-0.15, 0.2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> logp_old(6), logp_new(6), adv(6);
    for (std::size_t i = 0; i < 6; ++i) {
      logp_old[i] = -1.0 - u(rng);
      logp_new[i] = logp_old[i] + inside(rng);
      adv[i] = ua(rng);
    }
    auto objective = [&](const std::vector<double>& lp) {
      std::vector<double> r;
      for (std::size_t i = 0; i < lp.size(); ++i) r.push_back(probability_ratio(lp[i], logp_old[i]));
      return dapo_objective(r, adv, bounds);
    };
    std::vector<double> ratios;
    for (std::size_t i = 0; i < 6; ++i) ratios.push_back(probability_ratio(logp_new[i], logp_old[i]));
    const auto grad = dapo_objective_logp_gradient(ratios, adv, bounds);
    for (std::size_t i = 0; i < 6; ++i) {
      const double h = 1e-6;
      auto up = logp_new, down = logp_new;
      up[i] += h;
      down[i] -= h;
      const double fd = (objective(up) - objective(down)) / (2 * h);
      c.require(std::abs(fd - grad[i]) <= 1e-4 * std::max(std::abs(grad[i]), 1e-8), "finite difference");
    }
  }
  c.require(seconds_since(start) < 5.0, "slower than 5 s");
  return c;
}

Check case_study() {
  Check c;
  const auto p = nearest_integer();
  const auto script = nlohmann::json::parse(fixture_text("demo/script.json"));
  const LoopConfig config;
  const auto first = run_loop(p, script, config);
  const auto second = run_loop(p, script, config);
  const Sandbox sb;
  std::vector<std::size_t> trajectory;
  for (const auto& [id, n] : candidate_hidden_trajectory(p, first.trace, sb)) trajectory.push_back(n);
  c.require(trajectory == std::vector<std::size_t>{10, 13, 15}, "hidden trajectory is not 10 -> 13 -> 15");
  c.require(first.final_candidate.source == nearest_program("v2"), "final selection is not V2");
  c.require(first.trace.to_jsonl() == second.trace.to_jsonl(), "runs differ");
  return c;
}

Check motivating_example() {
  Check c;
  const auto p = street_lanterns();
  const Sandbox sb;
  const auto buggy = fixture_text("street_lanterns/buggy.py");
  for (const auto& t : p.public_tests) c.require(sb.passes(buggy, t, p.reference_solution), "buggy fails a public test");

  const auto reading = parse_test_case(
      "```\nINPUT:\n3 100\n90 95 100\nEXPECTED_OUTPUT:\n90.0000000000\n```\n", 1);
  const bool valid = test_validity(*reading.expected_output, sb.run(*p.reference_solution, reading.input), sb.policy());
  c.require(valid, "all-lanterns-right test is not valid");
  c.require(test_reveals(valid, sb.run(buggy, reading.input), *reading.expected_output, sb.policy()),
            "all-lanterns-right test does not reveal");

  // Blind mode never sees the program and proposes generic inputs.
  const auto blind_prompt = build_auditor_prompt(p.spec, buggy, AuditorMode::Blind);
  c.require(blind_prompt.find(trim(buggy)) == std::string::npos, "blind prompt shows the program");
  nlohmann::json script;
  script["base"] = {"```\n" + buggy + "```\n"};
  for (const char* t : {"INPUT:\n2 10\n0 10\nEXPECTED_OUTPUT:\n5.0000000000\n",
                        "INPUT:\n4 20\n0 5 10 20\nEXPECTED_OUTPUT:\n5.0000000000\n",
                        "INPUT:\n2 6\n0 6\nEXPECTED_OUTPUT:\n3.0000000000\n"}) {
    script["auditor"].push_back("```\n" + std::string(t) + "```\n");
  }
  LoopConfig config;
  config.budget = 4;
  config.auditor_mode = AuditorMode::Blind;
  const auto run = run_loop(p, script, config);
  c.require(!run.trace.auditor_tests.empty(), "blind auditor produced no tests");
  for (const auto& t : run.trace.auditor_tests) {
    const bool v = test_validity(*t.expected_output, sb.run(*p.reference_solution, t.input), sb.policy());
    c.require(!test_reveals(v, sb.run(buggy, t.input), *t.expected_output, sb.policy()), "blind test reveals");
  }
  return c;
}

Check budget_exactness() {
  Check c;
  const auto corpus = load_corpus(fixture_path("demo/corpus.jsonl"));
  LoopConfig config;
  config.budget = 20;
  config.max_cycles = 5;
  ModelGateway gw(ScriptedBackend::from_file(fixture_path("demo/script.json")));
  const Sandbox sb;
  for (const auto& p : corpus.problems) {
    const auto run = run_pipeline(p, LoopContext{gw, sb, config});
    c.require(run.trace.invocations_used <= 20, p.id + " exceeds budget");
    c.require(!run.trace.invocations_per_cycle.empty() && run.trace.invocations_per_cycle[0] == 4,
              p.id + " cycle-1 cost is not 4");
  }
  nlohmann::json s;
  for (int i = 0; i < 5; ++i) {
    s["base"].push_back("print(0)\n");
    s["fixer_r1"].push_back("print(0)\n");
    s["fixer_r2"].push_back("print(0)\n");
  }
  for (int i = 0; i < 10; ++i) s["auditor"].push_back("```\nINPUT:\n6 5\n4 7 10 6 5\nEXPECTED_OUTPUT:\n8\n```\n");
  const auto full = run_loop(corpus.problems[0], s, config);
  c.require(full.trace.invocations_per_cycle == std::vector<std::size_t>(5, 4), "cycles are not 4 x 5");
  c.require(full.trace.invocations_used == 20, "total is not 20");
  return c;
}

Check selection_rule() {
  Check c;
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SelectionRow> rows(1 + rng() % 10);
    const std::size_t total = 1 + rng() % 5;
    for (auto& r : rows) r = {rng() % (total + 1), total, rng() % 6};
    c.require(select_final(rows).index == oracle_select(rows), fmt::format("pool {} disagrees", trial));
  }
  return c;
}

Check metrics() {
  Check c;
  auto result = [](std::size_t passed, std::size_t total) {
    ProblemResult r;
    r.hidden_passed = passed;
    r.hidden_total = total;
    return r;
  };
  c.require(format_percent(pass_at_1({result(4, 4), result(1, 4), result(2, 2), result(0, 3)}).percent) == "50.00",
            "Pass@1");
  c.require(format_percent(avg_pass_ratio({result(3, 5), result(1, 2)}).percent) == "55.00", "AvgPassRatio");

  const Sandbox sb;
  const auto corpus = load_corpus(fixture_path("demo/corpus.jsonl"));
  ModelGateway gw(ScriptedBackend::from_file(fixture_path("demo/script.json")));
  const LoopConfig config;
  std::size_t reports = 0;
  for (const auto& p : corpus.problems) {
    const auto run = run_pipeline(p, LoopContext{gw, sb, config});
    const auto r = audit_quality(audit_items_from_trace(p, run.trace), sb);
    c.require(r.consistent(), p.id + " audit report is inconsistent");
    ++reports;
  }
  std::vector<AuditItem> synthetic;
  for (int x = 1; x <= 10; ++x) {
    synthetic.push_back({TestCase{std::to_string(x) + "\n", std::to_string(x <= 7 ? 2 * x : 0) + "\n",
                                  Provenance::Auditor, 1},
                         "x = int(input())\nprint(x * 2 if x < 5 else 0)\n", std::string("print(int(input()) * 2)\n")});
  }
  const auto r = audit_quality(synthetic, sb);
  c.require(r.consistent() && r.checkable == 10 && r.valid == 7 && r.bug_revealing == 3, "synthetic audit report");
  c.require(reports == 2, "missing reports");
  return c;
}

Check decontamination() {
  Check c;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto corp = planted_corpora(seed, 80, 20, 25);
    const auto result = ngram_decontaminate(corp.train, corp.eval, 13);
    for (const auto& t : corp.train.problems) {
      bool overlaps = false;
      for (const auto& e : corp.eval.problems) {
        overlaps = overlaps ||
                   oracle_shares_window(decontamination_tokens(t.spec), decontamination_tokens(e.spec), 13);
      }
      c.require(overlaps == (result.kept.find(t.id) == nullptr), "recall/precision mismatch for " + t.id);
    }
  }
  Corpus sizes;
  for (std::size_t i = 0; i < 40; ++i) {
    Problem p;
    p.id = "p" + std::to_string(i);
    p.spec = "s";
    p.public_tests.assign(i % 6, TestCase{"1\n", "1\n", Provenance::Public, 0});
    p.hidden_tests.assign(i % 25, TestCase{"1\n", "1\n", Provenance::Hidden, 0});
    sizes.problems.push_back(std::move(p));
  }
  const auto once = filter_min_tests(sizes, 20);
  c.require(filter_min_tests(once, 20).problems == once.problems, "filter_min_tests is not idempotent");
  return c;
}

Check end_to_end_determinism() {
  Check c;
  TempDir tmp;
  auto run_cli_quiet = [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    return run_cli(args, out, err, [](const std::string&) { return std::optional<std::string>{}; });
  };
  nlohmann::json sft;
  for (int i = 0; i < 20; ++i) {
    sft["base"].push_back("```\nprint(7)\n```\n");
    sft["sft_teacher"].push_back("Answer: 7");
  }
  write_file(tmp.file("sft_script.json"), sft.dump());

  for (const char* tag : {"a", "b"}) {
    const auto root = tmp.path() / tag;
    c.require(run_cli_quiet({"run", "--corpus", fixture_path("demo/corpus.jsonl"), "--script",
                             fixture_path("demo/script.json"), "--seed", "5", "--trace-dir",
                             (root / "run").string()}) == 0,
              "run failed");
    c.require(run_cli_quiet({"episodes", "--stage", "C", "--group-size", "4", "--corpus",
                             fixture_path("nearest_integer/corpus.jsonl"), "--script",
                             fixture_path("nearest_integer/script_stage_c.json"), "--trace-dir",
                             (root / "episodes").string()}) == 0,
              "episodes failed");
    c.require(run_cli_quiet({"build-sft", "--corpus", fixture_path("demo/corpus.jsonl"), "--script",
                             tmp.file("sft_script.json"), "--per-problem", "3", "--seed", "5", "--trace-dir",
                             (root / "sft").string()}) == 0,
              "build-sft failed");
  }
  for (const char* f : {"run/traces/nearest-integer.jsonl", "run/traces/street-lanterns.jsonl",
                        "episodes/training_records.jsonl", "sft/sft.jsonl"}) {
    const auto a = read_file((tmp.path() / "a" / f).string());
    c.require(!a.empty() && a == read_file((tmp.path() / "b" / f).string()), std::string(f) + " differs");
  }
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"reward oracle equivalence over 2^8 x 2^8 pass vectors", reward_oracle},
      {"exhaustive reward tables", reward_tables},
      {"group advantages, clip equivalence and gradient check", dapo_suite},
      {"case study trajectory 10 -> 13 -> 15 with V2 selected", case_study},
      {"motivating example: code-reading reveals, blind does not", motivating_example},
      {"budget exactness (4 per cycle, 20 total)", budget_exactness},
      {"selection rule against brute force on 100 pools", selection_rule},
      {"metrics fixtures and audit partition identities", metrics},
      {"decontamination recall and filter idempotence", decontamination},
      {"end-to-end determinism of traces, records and SFT data", end_to_end_determinism},
  };
  const auto suite_start = std::chrono::steady_clock::now();
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Check result;
    try {
      result = criteria[i].second();
    } catch (const std::exception& e) {
      result.ok = false;
      result.why = std::string("exception: ") + e.what();
    }
    const double ms = 1000.0 * seconds_since(start);
    std::cout << fmt::format("{} criterion {:>2}: {} ({:.0f} ms){}\n", result.ok ? "PASS" : "FAIL", i + 1,
                             criteria[i].first, ms, result.ok ? "" : " -- " + result.why);
    if (!result.ok) ++failures;
  }
  std::cout << fmt::format("{} of {} criteria passed in {:.1f} s\n", criteria.size() - failures, criteria.size(),
                           seconds_since(suite_start));
  return failures == 0 ? 0 : 1;
}

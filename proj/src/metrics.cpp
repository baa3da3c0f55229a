#include "fixaudit/metrics.hpp"

#include <istream>
#include <map>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

namespace {

std::size_t hidden_passed_by(const Problem& problem, const std::string& source, const Sandbox& sandbox) {
  if (trim(source).empty()) return 0;
  std::size_t n = 0;
  for (const auto& t : problem.hidden_tests) {
    if (sandbox.passes(source, t, problem.reference_solution)) ++n;
  }
  return n;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ProblemResult evaluate_trace(const Problem& problem, const LoopTrace& trace, const Sandbox& sandbox) {
  ProblemResult r;
  r.problem_id = problem.id;
  r.hidden_total = problem.hidden_tests.size();
  r.selected_candidate = trace.selected.id;
  r.hidden_passed = hidden_passed_by(problem, trace.selected.source, sandbox);
  r.invocations_used = trace.invocations_used;
  for (std::size_t c = 1; c <= trace.cycles_completed; ++c) {
    const auto sel = replay_selection(trace, static_cast<int>(c));
    IterationSnapshot snap{static_cast<int>(c), 0, Candidate::sentinel().id};
    if (sel.index) {
      const auto* cand = trace.find_candidate(trace.pool[*sel.index].candidate_id);
      if (cand != nullptr) {
        snap.candidate_id = cand->id;
        snap.hidden_passed = hidden_passed_by(problem, cand->source, sandbox);
      }
    }
    r.per_iteration_snapshots.push_back(std::move(snap));
  }
  return r;
}

std::vector<std::pair<std::string, std::size_t>> candidate_hidden_trajectory(const Problem& problem,
                                                                             const LoopTrace& trace,
                                                                             const Sandbox& sandbox) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& c : trace.candidates) out.emplace_back(c.id, hidden_passed_by(problem, c.source, sandbox));
  return out;
}

Score pass_at_1(const std::vector<ProblemResult>& results) {
  Score s;
  std::size_t full = 0;
  for (const auto& r : results) {
    if (r.hidden_total == 0) {
      s.excluded.push_back(r.problem_id);
      continue;
    }
    ++s.counted;
    if (r.fully_passed()) ++full;
  }
  if (s.counted > 0) s.percent = 100.0 * static_cast<double>(full) / static_cast<double>(s.counted);
  return s;
}

Score avg_pass_ratio(const std::vector<ProblemResult>& results) {
  Score s;
  double sum = 0.0;
  for (const auto& r : results) {
    if (r.hidden_total == 0) {
      s.excluded.push_back(r.problem_id);
      continue;
    }
    ++s.counted;
    sum += static_cast<double>(r.hidden_passed) / static_cast<double>(r.hidden_total);
  }
  if (s.counted > 0) s.percent = 100.0 * sum / static_cast<double>(s.counted);
  return s;
}

std::vector<double> iteration_curve(const std::vector<ProblemResult>& results, std::size_t max_cycles) {
  std::vector<double> curve;
  for (std::size_t c = 1; c <= max_cycles; ++c) {
    std::vector<ProblemResult> at_cycle;
    for (const auto& r : results) {
      ProblemResult snap;
      snap.problem_id = r.problem_id;
      snap.hidden_total = r.hidden_total;
      if (!r.per_iteration_snapshots.empty()) {
        const auto k = std::min(c, r.per_iteration_snapshots.size());
        snap.hidden_passed = r.per_iteration_snapshots[k - 1].hidden_passed;
      }
      at_cycle.push_back(std::move(snap));
    }
    curve.push_back(pass_at_1(at_cycle).percent);
  }
  return curve;
}

std::string format_percent(double percent) { return fmt::format("{:.2f}", percent); }

AuditQualityReport audit_quality(const std::vector<AuditItem>& items, const Sandbox& sandbox) {
  AuditQualityReport r;
  for (const auto& item : items) {
    if (!item.reference || trim(*item.reference).empty()) {
      ++r.uncheckable;
      continue;
    }
    ++r.checkable;
    const auto& y = item.test.expected_output.value_or("");
    const bool valid = test_validity(y, sandbox.run(*item.reference, item.test.input), sandbox.policy());
    if (!valid) {
      ++r.invalid;
      continue;
    }
    ++r.valid;
    const auto target = trim(item.target_source).empty() ? ExecutionResult{} : sandbox.run(item.target_source, item.test.input);
    if (test_reveals(true, target, y, sandbox.policy())) {
      ++r.bug_revealing;
    } else {
      ++r.candidate_correct;
    }
  }
  return r;
}

std::vector<AuditItem> audit_items_from_trace(const Problem& problem, const LoopTrace& trace) {
  std::vector<AuditItem> items;
  for (const auto& step : trace.steps) {
    if (step.kind != "auditor" || !step.test_index || !step.candidate_id) continue;
    const auto* target = trace.find_candidate(*step.candidate_id);
    items.push_back({trace.auditor_tests.at(*step.test_index), target ? target->source : std::string(),
                     problem.reference_solution});
  }
  return items;
}

std::vector<AuditItem> audit_items_from_jsonl(const Problem& problem, std::istream& trace_jsonl) {
  std::map<std::string, std::string> sources;
  std::map<std::size_t, TestCase> tests;
  std::vector<std::pair<std::size_t, std::string>> links;
  std::string line;
  while (std::getline(trace_jsonl, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto type = j.value("type", "");
    if (type == "candidate") {
      sources[j.at("id").get<std::string>()] = j.at("source").get<std::string>();
    } else if (type == "auditor_test") {
      TestCase t;
      t.input = j.at("input").get<std::string>();
      t.expected_output = j.at("expected_output").get<std::string>();
      t.provenance = Provenance::Auditor;
      t.cycle = j.at("cycle").get<int>();
      tests[j.at("index").get<std::size_t>()] = std::move(t);
    } else if (type == "step" && j.value("kind", "") == "auditor" && j.contains("test_index") &&
               j.contains("candidate_id")) {
      links.emplace_back(j.at("test_index").get<std::size_t>(), j.at("candidate_id").get<std::string>());
    }
  }
  std::vector<AuditItem> items;
  for (const auto& [index, cand] : links) {
    const auto t = tests.find(index);
    if (t == tests.end()) throw Error("trace references auditor test " + std::to_string(index) + " it does not contain");
    const auto s = sources.find(cand);
    items.push_back({t->second, s == sources.end() ? std::string() : s->second, problem.reference_solution});
  }
  return items;
}

void write_summary_json(const std::vector<ProblemResult>& results, std::size_t max_cycles, std::ostream& out) {
  const auto p1 = pass_at_1(results);
  const auto apr = avg_pass_ratio(results);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (r.error) ++failed;
  }
  nlohmann::ordered_json o;
  o["problems"] = results.size();
  o["counted"] = p1.counted;
  o["excluded"] = p1.excluded;
  o["failed"] = failed;
  o["pass_at_1"] = format_percent(p1.percent);
  o["avg_pass_ratio"] = format_percent(apr.percent);
  auto curve = nlohmann::ordered_json::array();
  for (double v : iteration_curve(results, max_cycles)) curve.push_back(format_percent(v));
  o["iteration_curve"] = std::move(curve);
  out << o.dump(2) << '\n';
}

void write_results_csv(const std::vector<ProblemResult>& results, std::ostream& out) {
  out << "problem_id,hidden_passed,hidden_total,pass_ratio,selected_candidate,invocations_used,error\n";
  for (const auto& r : results) {
    const double ratio =
        r.hidden_total == 0 ? 0.0 : 100.0 * static_cast<double>(r.hidden_passed) / static_cast<double>(r.hidden_total);
    out << csv_field(r.problem_id) << ',' << r.hidden_passed << ',' << r.hidden_total << ',' << format_percent(ratio)
        << ',' << csv_field(r.selected_candidate) << ',' << r.invocations_used << ',' << csv_field(r.error.value_or(""))
        << '\n';
  }
}

void write_curve_tsv(const std::vector<double>& curve, std::ostream& out) {
  out << "# cycle\tpass_at_1\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << (i + 1) << '\t' << format_percent(curve[i]) << '\n';
}

}  // namespace fixaudit

#include "fixaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Public: return "public";
    case Provenance::Hidden: return "hidden";
    case Provenance::Auditor: return "auditor";
  }
  return "unknown";
}

const Problem* Corpus::find(std::string_view id) const {
  for (const auto& p : problems) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

namespace {

std::string require_string(const json& obj, const char* key, std::size_t line, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw CorpusError(line, where + key, "missing");
  if (!it->is_string()) throw CorpusError(line, where + key, "expected a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw CorpusError(line, key, "expected a string or null");
  return it->get<std::string>();
}

std::vector<TestCase> parse_tests(const json& obj, const char* key, Provenance provenance, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw CorpusError(line, key, "missing");
  if (!it->is_array()) throw CorpusError(line, key, "expected an array");
  std::vector<TestCase> tests;
  tests.reserve(it->size());
  for (std::size_t i = 0; i < it->size(); ++i) {
    const auto& t = (*it)[i];
    const std::string where = std::string(key) + "[" + std::to_string(i) + "].";
    if (!t.is_object()) throw CorpusError(line, where.substr(0, where.size() - 1), "expected an object");
    TestCase tc;
    tc.input = require_string(t, "input", line, where);
    if (tc.input.empty()) throw CorpusError(line, where + "input", "empty test input");
    tc.expected_output = require_string(t, "output", line, where);
    tc.provenance = provenance;
    tests.push_back(std::move(tc));
  }
  return tests;
}

Problem parse_problem(const std::string& text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorpusError(line, "", std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw CorpusError(line, "", "expected a JSON object");
  Problem p;
  p.id = require_string(obj, "id", line, "");
  if (p.id.empty()) throw CorpusError(line, "id", "empty id");
  p.spec = require_string(obj, "spec", line, "");
  p.public_tests = parse_tests(obj, "public_tests", Provenance::Public, line);
  p.hidden_tests = parse_tests(obj, "hidden_tests", Provenance::Hidden, line);
  p.reference_solution = optional_string(obj, "reference_solution", line);
  p.difficulty = optional_string(obj, "difficulty", line);
  return p;
}

ordered_json tests_to_json(const std::vector<TestCase>& tests) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : tests) {
    ordered_json o;
    o["input"] = t.input;
    o["output"] = t.expected_output.value_or("");
    arr.push_back(std::move(o));
  }
  return arr;
}

}  // namespace

Corpus parse_corpus(std::istream& in, std::string source_label) {
  Corpus corpus;
  corpus.source_label = std::move(source_label);
  std::set<std::string, std::less<>> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Problem p = parse_problem(text, line);
    if (!seen.insert(p.id).second) throw CorpusError(line, "id", "duplicate problem id '" + p.id + "'");
    corpus.problems.push_back(std::move(p));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus '" + path + "'");
  return parse_corpus(in, path);
}

void save_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& p : corpus.problems) {
    ordered_json o;
    o["id"] = p.id;
    o["spec"] = p.spec;
    o["public_tests"] = tests_to_json(p.public_tests);
    o["hidden_tests"] = tests_to_json(p.hidden_tests);
    o["reference_solution"] = p.reference_solution ? ordered_json(*p.reference_solution) : ordered_json(nullptr);
    o["difficulty"] = p.difficulty ? ordered_json(*p.difficulty) : ordered_json(nullptr);
    out << o.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write corpus '" + path + "'");
  save_corpus(corpus, out);
}

Corpus filter_min_tests(const Corpus& corpus, std::size_t min_count) {
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  Corpus out;
  out.source_label = corpus.source_label;
  std::copy_if(corpus.problems.begin(), corpus.problems.end(), std::back_inserter(out.problems),
               [&](const Problem& p) { return p.test_count() >= min_count; });
  return out;
}

std::vector<std::string> decontamination_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

std::string join_window(const std::vector<std::string>& tokens, std::size_t start, std::size_t n) {
  std::string w;
  for (std::size_t i = start; i < start + n; ++i) {
    if (i != start) w.push_back(' ');
    w += tokens[i];
  }
  return w;
}

}  // namespace

DecontaminationResult ngram_decontaminate(const Corpus& train, const Corpus& eval, std::size_t n) {
  if (n < 2) throw ContractError("n-gram size must be >= 2");

  // window text -> indices of eval problems containing it
  std::unordered_map<std::string, std::vector<std::size_t>> eval_windows;
  for (std::size_t e = 0; e < eval.problems.size(); ++e) {
    const auto tokens = decontamination_tokens(eval.problems[e].spec);
    if (tokens.size() < n) continue;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      auto& owners = eval_windows[join_window(tokens, i, n)];
      if (owners.empty() || owners.back() != e) owners.push_back(e);
    }
  }

  DecontaminationResult result;
  result.kept.source_label = train.source_label;
  for (const auto& problem : train.problems) {
    const auto tokens = decontamination_tokens(problem.spec);
    std::map<std::string, std::string> witness_by_eval;
    if (tokens.size() >= n) {
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        const auto it = eval_windows.find(join_window(tokens, i, n));
        if (it == eval_windows.end()) continue;
        for (std::size_t e : it->second) witness_by_eval.try_emplace(eval.problems[e].id, it->first);
      }
    }
    if (witness_by_eval.empty()) {
      result.kept.problems.push_back(problem);
      continue;
    }
    for (auto& [eval_id, window] : witness_by_eval) {
      result.removed.push_back({problem.id, eval_id, window});
    }
  }
  std::sort(result.removed.begin(), result.removed.end(), [](const Contamination& a, const Contamination& b) {
    return std::tie(a.train_id, a.eval_id) < std::tie(b.train_id, b.eval_id);
  });
  return result;
}

void write_contamination_report(const std::vector<Contamination>& removed, std::ostream& out) {
  for (const auto& c : removed) {
    ordered_json o;
    o["train_id"] = c.train_id;
    o["eval_id"] = c.eval_id;
    o["window"] = c.window;
    out << o.dump() << '\n';
  }
}

ValidationReport validate_problem(const Problem& problem) {
  ValidationReport report;
  auto add = [&](Severity s, std::string code, std::string msg) {
    report.issues.push_back({s, std::move(code), std::move(msg)});
  };
  if (problem.id.empty()) add(Severity::Error, "empty_id", "problem id is empty");
  if (trim(problem.spec).empty()) add(Severity::Error, "empty_spec", "specification text is empty");
  if (!problem.reference_solution) {
    report.uncheckable = true;
    add(Severity::Warning, "uncheckable", "no reference solution; excluded from reward-bearing pipelines");
  }
  if (problem.public_tests.empty()) add(Severity::Warning, "no_public_tests", "public test list is empty");
  if (problem.hidden_tests.empty()) add(Severity::Warning, "no_hidden_tests", "hidden test list is empty");
  auto check_inputs = [&](const std::vector<TestCase>& tests, std::string_view kind) {
    for (std::size_t i = 0; i < tests.size(); ++i) {
      if (tests[i].input.empty()) {
        add(Severity::Error, "empty_input", std::string(kind) + " test " + std::to_string(i) + " has empty input");
      }
      if (!tests[i].expected_output) {
        add(Severity::Error, "missing_output",
            std::string(kind) + " test " + std::to_string(i) + " has no expected output");
      }
    }
  };
  check_inputs(problem.public_tests, "public");
  check_inputs(problem.hidden_tests, "hidden");
  return report;
}

}  // namespace fixaudit

#include "fixaudit/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fixaudit/corpus.hpp"
#include "fixaudit/dapo.hpp"
#include "fixaudit/episodes.hpp"
#include "fixaudit/error.hpp"
#include "fixaudit/loop.hpp"
#include "fixaudit/metrics.hpp"
#include "fixaudit/model.hpp"
#include "fixaudit/sandbox.hpp"
#include "fixaudit/sft.hpp"
#include "fixaudit/util.hpp"

namespace fs = std::filesystem;

namespace fixaudit {

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

nlohmann::ordered_json default_config() {
  nlohmann::ordered_json c;
  c["corpus"] = "";
  c["train_corpus"] = "";
  c["eval_corpus"] = "";
  c["traces"] = "";
  c["trace_dir"] = "";
  c["overwrite"] = false;
  c["workers"] = 1;
  c["backend"] = "scripted";
  c["script"] = "";
  c["replay_file"] = "";
  c["endpoint"] = "";
  c["api_key"] = "";
  c["model"] = "default";
  c["record_calls"] = true;
  c["mode"] = "inference";
  c["budget"] = 20;
  c["max_cycles"] = 5;
  c["strategy"] = "fresh-base";
  c["auditor_mode"] = "code-reading";
  c["include_observed_output"] = true;
  c["temperature"] = 1.0;
  c["top_p"] = 1.0;
  c["max_tokens"] = 8192;
  c["seed"] = 0;
  c["stage"] = "B";
  c["artifacts"] = "";
  c["group_size"] = 8;
  c["aux_k"] = 4;
  c["advantage_epsilon"] = kAdvantageEpsilon;
  c["eps_low"] = 0.2;
  c["eps_high"] = 0.28;
  c["instances"] = 1000;
  c["min_tests"] = 20;
  c["ngram"] = 13;
  c["per_problem"] = 4;
  c["timeout_seconds"] = 10.0;
  c["max_output_bytes"] = 16u << 20;
  c["max_memory_bytes"] = 0;
  c["float_tolerance"] = -1.0;
  c["collapse_blank_lines"] = false;
  c["interpreter"] = "python3 {program}";
  c["program_filename"] = "program.py";
  c["max_concurrency"] = 0;
  return c;
}

namespace {

bool compatible(const nlohmann::ordered_json& def, const nlohmann::ordered_json& v) {
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  return v.is_string();
}

nlohmann::ordered_json parse_scalar(const nlohmann::ordered_json& def, const std::string& key, const std::string& text) {
  if (def.is_string()) return text;
  if (def.is_boolean()) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
    if (t == "0" || t == "false" || t == "no" || t == "off") return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + text + "'");
  }
  try {
    std::size_t used = 0;
    if (def.is_number_float()) {
      const double d = std::stod(text, &used);
      if (used == text.size()) return d;
    } else if (!text.empty() && text.front() != '-') {
      const auto u = std::stoull(text, &used);
      if (used == text.size()) return u;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
}

void merge_layer(nlohmann::ordered_json& cfg, const nlohmann::ordered_json& layer, const std::string& origin) {
  if (!layer.is_object()) throw ConfigError(origin + " must be a JSON object");
  for (const auto& [key, value] : layer.items()) {
    if (!cfg.contains(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
    if (!compatible(cfg[key], value)) throw ConfigError(origin + ": wrong type for '" + key + "'");
    cfg[key] = value;
  }
}

std::string env_name(const std::string& key) {
  std::string name = "FIXAUDIT_";
  for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

}  // namespace

nlohmann::ordered_json resolve_config(const std::optional<std::string>& config_path,
                                      const nlohmann::ordered_json& flags, const EnvLookup& env) {
  auto cfg = default_config();
  if (config_path) {
    nlohmann::ordered_json file;
    try {
      file = nlohmann::ordered_json::parse(read_file(*config_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + *config_path + ": " + e.what());
    }
    merge_layer(cfg, file, "config file " + *config_path);
  }
  merge_layer(cfg, flags, "command line");
  nlohmann::ordered_json from_env = nlohmann::ordered_json::object();
  const auto defaults = default_config();
  for (const auto& [key, def] : defaults.items()) {
    if (auto v = env(env_name(key))) from_env[key] = parse_scalar(def, key, *v);
  }
  merge_layer(cfg, from_env, "environment");
  return cfg;
}

namespace {

/// Typed view over a resolved configuration.
struct Settings {
  const nlohmann::ordered_json& cfg;

  std::string str(const char* key) const { return cfg.at(key).get<std::string>(); }
  std::size_t count(const char* key) const { return cfg.at(key).get<std::size_t>(); }
  double real(const char* key) const { return cfg.at(key).get<double>(); }
  bool flag(const char* key) const { return cfg.at(key).get<bool>(); }

  std::string required(const char* key) const {
    auto v = str(key);
    if (v.empty()) throw ConfigError("--" + dashed(key) + " is required for this command");
    return v;
  }

  static std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

  Sandbox::Options sandbox_options() const {
    Sandbox::Options o;
    o.limits.wall_clock_timeout = std::chrono::duration<double>(real("timeout_seconds"));
    o.limits.max_output_bytes = count("max_output_bytes");
    if (count("max_memory_bytes") > 0) o.limits.max_memory = count("max_memory_bytes");
    if (real("float_tolerance") >= 0.0) o.policy.float_tolerance = real("float_tolerance");
    o.policy.collapse_internal_blank_lines = flag("collapse_blank_lines");
    o.interpreter.command_template = str("interpreter");
    o.interpreter.program_filename = str("program_filename");
    o.max_concurrency = count("max_concurrency");
    return o;
  }

  AuditorMode auditor_mode() const {
    const auto m = str("auditor_mode");
    if (m == "code-reading") return AuditorMode::CodeReading;
    if (m == "blind") return AuditorMode::Blind;
    throw ConfigError("auditor_mode must be 'code-reading' or 'blind'");
  }

  RunMode mode() const {
    const auto m = str("mode");
    if (m == "inference") return RunMode::Inference;
    if (m == "training") return RunMode::Training;
    throw ConfigError("mode must be 'inference' or 'training'");
  }

  LoopConfig loop_config() const {
    LoopConfig c;
    c.budget = count("budget");
    c.max_cycles = count("max_cycles");
    c.strategy = cycle_strategy_from_string(str("strategy"));
    c.mode = mode();
    c.auditor_mode = auditor_mode();
    c.include_observed_output = flag("include_observed_output");
    c.temperature = real("temperature");
    c.top_p = real("top_p");
    c.max_tokens = static_cast<int>(count("max_tokens"));
    c.seed = count("seed");
    try {
      c.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    return c;
  }

  EpisodeConfig episode_config() const {
    EpisodeConfig c;
    c.group_size = count("group_size");
    c.aux_k = count("aux_k");
    c.include_observed_output = flag("include_observed_output");
    c.auditor_mode = auditor_mode();
    c.temperature = real("temperature");
    c.top_p = real("top_p");
    c.max_tokens = static_cast<int>(count("max_tokens"));
    c.seed = count("seed");
    try {
      c.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    return c;
  }

  std::shared_ptr<ModelBackend> backend() const {
    const auto b = str("backend");
    if (b == "scripted") return ScriptedBackend::from_file(required("script"));
    if (b == "replay") return ReplayBackend::from_file(required("replay_file"));
    if (b == "remote") {
      RemoteOptions o;
      o.endpoint = str("endpoint");
      if (o.endpoint.empty()) throw ConfigError(std::string(kEndpointEnv) + " is not set (remote backend)");
      o.api_key = str("api_key");
      o.model = str("model");
      return std::make_shared<RemoteBackend>(std::move(o), make_http_transport());
    }
    throw ConfigError("backend must be remote, scripted or replay");
  }
};

/// Prepares an output directory and stores the resolved configuration in it.
fs::path prepare_output(const Settings& s) {
  const fs::path dir = s.required("trace_dir");
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!s.flag("overwrite")) {
      throw ConfigError("output directory " + dir.string() + " is not empty (pass --overwrite to replace it)");
    }
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(dir);
  auto stored = s.cfg;
  if (!stored["api_key"].get<std::string>().empty()) stored["api_key"] = "<redacted>";
  write_file((dir / "config.json").string(), stored.dump(2) + "\n");
  return dir;
}

std::shared_ptr<ModelGateway> make_gateway(const Settings& s, std::shared_ptr<ModelBackend> backend,
                                           const fs::path& dir) {
  auto gateway = std::make_shared<ModelGateway>(std::move(backend));
  if (s.flag("record_calls")) gateway->set_recorder(std::make_shared<CallRecorder>((dir / "model_calls.jsonl").string()));
  return gateway;
}

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  fn(f);
}

int cmd_run(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(s.required("corpus"));
  const auto loop = s.loop_config();
  auto backend = s.backend();
  const Sandbox sandbox(s.sandbox_options());
  const auto dir = prepare_output(s);
  fs::create_directories(dir / "traces");
  auto gateway = make_gateway(s, std::move(backend), dir);
  const LoopContext ctx{*gateway, sandbox, loop};

  const auto n = corpus.problems.size();
  std::vector<ProblemResult> results(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& p = corpus.problems[i];
      try {
        const auto run = run_pipeline(p, ctx);
        write_file((dir / "traces" / (sanitize_filename(p.id) + ".jsonl")).string(), run.trace.to_jsonl());
        results[i] = evaluate_trace(p, run.trace, sandbox);
      } catch (const Error& e) {
        results[i].problem_id = p.id;
        results[i].hidden_total = p.hidden_tests.size();
        results[i].selected_candidate = Candidate::sentinel().id;
        results[i].error = e.what();
      }
    }
  };
  const auto workers = std::max<std::size_t>(1, std::min(s.count("workers"), n));
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();

  write_stream(dir / "summary.json", [&](std::ostream& f) { write_summary_json(results, loop.max_cycles, f); });
  write_stream(dir / "results.csv", [&](std::ostream& f) { write_results_csv(results, f); });
  write_stream(dir / "curve.tsv", [&](std::ostream& f) { write_curve_tsv(iteration_curve(results, loop.max_cycles), f); });

  std::size_t failed = 0;
  for (const auto& r : results) {
    if (r.error) {
      ++failed;
      err << "problem " << r.problem_id << " failed: " << *r.error << '\n';
    }
  }
  const auto p1 = pass_at_1(results);
  out << "problems: " << n << " (failed: " << failed << ", excluded: " << p1.excluded.size() << ")\n";
  out << "Pass@1: " << format_percent(p1.percent) << "%\n";
  out << "AvgPassRatio: " << format_percent(avg_pass_ratio(results).percent) << "%\n";
  return 0;
}

int cmd_episodes(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto stage = stage_from_string(s.str("stage"));
  const auto corpus = load_corpus(s.required("corpus"));
  const auto config = s.episode_config();
  std::vector<AuditorArtifact> artifacts;
  if (stage == Stage::D) {
    std::ifstream in(s.required("artifacts"));
    if (!in) throw ConfigError("cannot read artifacts file " + s.str("artifacts"));
    artifacts = read_auditor_artifacts(in);
  }
  auto backend = s.backend();
  const Sandbox sandbox(s.sandbox_options());
  const auto dir = prepare_output(s);
  auto gateway = make_gateway(s, std::move(backend), dir);
  const auto report = generate_stage_episodes(stage, corpus, *gateway, sandbox, config, artifacts);

  const auto kept = filter_uniform_reward_groups(report.groups);
  const auto records = build_training_records(kept, s.real("advantage_epsilon"));
  write_stream(dir / "sample_groups.jsonl", [&](std::ostream& f) { write_sample_groups(report.groups, f); });
  write_stream(dir / "training_records.jsonl", [&](std::ostream& f) { write_training_records(records, f); });
  write_stream(dir / "rewards.jsonl", [&](std::ostream& f) {
    for (const auto& r : report.rewards) f << r.to_json().dump() << '\n';
  });
  if (stage == Stage::C) {
    write_stream(dir / "auditor_artifacts.jsonl", [&](std::ostream& f) { write_auditor_artifacts(report.artifacts, f); });
  }
  for (const auto& sk : report.skipped) err << "skipped " << sk.problem_id << ": " << sk.reason << '\n';
  out << "stage " << to_string(stage) << ": groups " << report.groups.size() << ", kept after filtering "
      << kept.size() << ", training records " << records.size() << ", skipped problems " << report.skipped.size()
      << '\n';
  return 0;
}

int cmd_decontaminate(const Settings& s, std::ostream& out, std::ostream&) {
  const auto train = load_corpus(s.required("train_corpus"));
  const auto eval = load_corpus(s.required("eval_corpus"));
  const auto n = s.count("ngram");
  if (n < 2) throw ConfigError("--ngram must be >= 2");
  const auto dir = prepare_output(s);
  const auto result = ngram_decontaminate(train, eval, n);
  save_corpus(result.kept, (dir / "kept_corpus.jsonl").string());
  write_stream(dir / "contamination.jsonl", [&](std::ostream& f) { write_contamination_report(result.removed, f); });
  out << "kept " << result.kept.problems.size() << " of " << train.problems.size() << " train problems; "
      << result.removed.size() << " contaminated pairs\n";
  return 0;
}

int cmd_build_sft(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(s.required("corpus"));
  auto backend = s.backend();
  const Sandbox sandbox(s.sandbox_options());
  const auto dir = prepare_output(s);
  auto gateway = make_gateway(s, std::move(backend), dir);
  const auto per_problem = s.count("per_problem");
  const auto seed = s.count("seed");

  const auto prediction = build_output_prediction_samples(corpus, *gateway, *gateway, per_problem, seed);
  const auto derivation = build_spec_derivation_samples(corpus, *gateway, per_problem, seed);
  auto all = prediction.samples;
  all.insert(all.end(), derivation.samples.begin(), derivation.samples.end());
  const auto violations = check_task_hygiene(all, corpus);
  for (const auto& v : violations) err << "task hygiene violation: " << v << '\n';

  const auto a = rejection_filter(prediction.samples, corpus, sandbox);
  const auto b = rejection_filter(derivation.samples, corpus, sandbox);
  write_file((dir / "sft.jsonl").string(), mix_and_emit(a.kept, b.kept, seed));
  write_stream(dir / "sft_rejected.jsonl", [&](std::ostream& f) {
    for (const auto* r : {&a, &b}) {
      for (const auto& rej : r->rejected) {
        auto j = rej.sample.to_json();
        j["reason"] = rej.reason;
        f << j.dump() << '\n';
      }
    }
  });
  for (const auto* rep : {&prediction, &derivation}) {
    for (const auto& id : rep->exhausted) err << "input pool exhausted for " << id << '\n';
    for (const auto& id : rep->uncheckable) err << "skipped uncheckable " << id << '\n';
  }
  out << "output_prediction: " << prediction.samples.size() << " built, " << a.kept.size() << " kept\n";
  out << "spec_derivation: " << derivation.samples.size() << " built, " << b.kept.size() << " kept\n";
  out << "teacher parse failures: " << prediction.teacher_parse_failures + derivation.teacher_parse_failures
      << ", candidate parse failures: " << prediction.candidate_parse_failures << '\n';
  return violations.empty() ? 0 : 1;
}

int cmd_audit_quality(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(s.required("corpus"));
  const fs::path traces = fs::path(s.required("traces")) / "traces";
  const Sandbox sandbox(s.sandbox_options());
  std::vector<AuditItem> items;
  for (const auto& p : corpus.problems) {
    const auto path = traces / (sanitize_filename(p.id) + ".jsonl");
    std::ifstream in(path);
    if (!in) {
      err << "no trace for " << p.id << '\n';
      continue;
    }
    const auto found = audit_items_from_jsonl(p, in);
    items.insert(items.end(), found.begin(), found.end());
  }
  const auto r = audit_quality(items, sandbox);
  auto pct = [](std::size_t a, std::size_t b) { return format_percent(b == 0 ? 0.0 : 100.0 * double(a) / double(b)); };
  out << "checkable: " << r.checkable << " (uncheckable: " << r.uncheckable << ")\n";
  out << "valid: " << r.valid << " (" << pct(r.valid, r.checkable) << "%)\n";
  out << "invalid: " << r.invalid << " (" << pct(r.invalid, r.checkable) << "%)\n";
  out << "bug_revealing: " << r.bug_revealing << " (" << pct(r.bug_revealing, r.valid) << "% of valid)\n";
  out << "candidate_correct: " << r.candidate_correct << " (" << pct(r.candidate_correct, r.valid)
      << "% of valid)\n";
  return r.consistent() ? 0 : 1;
}

int cmd_dapo_check(const Settings& s, std::ostream& out, std::ostream&) {
  ClipBounds bounds{s.real("eps_low"), s.real("eps_high")};
  try {
    bounds.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  bool ok = true;
  for (const auto& c : run_dapo_invariant_suite(s.count("seed"), bounds, s.count("instances"))) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << ": " << c.detail;
    out << '\n';
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

int cmd_filter(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(s.required("corpus"));
  const auto min_tests = s.count("min_tests");
  if (min_tests < 1) throw ConfigError("--min-tests must be >= 1");
  const auto dir = prepare_output(s);
  const auto kept = filter_min_tests(corpus, min_tests);
  for (const auto& p : kept.problems) {
    for (const auto& issue : validate_problem(p).issues) {
      err << p.id << ": " << (issue.severity == Severity::Error ? "error" : "warning") << " " << issue.code << ": "
          << issue.message << '\n';
    }
  }
  save_corpus(kept, (dir / "filtered.jsonl").string());
  out << "kept " << kept.problems.size() << " of " << corpus.problems.size() << " problems with >= " << min_tests
      << " tests\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Test-and-repair orchestration: inference loop, training episodes, data and metrics tools",
               "fixaudit"};
  app.fallthrough();
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "JSON config file");

  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  const auto defaults = default_config();
  for (const auto& [key, def] : defaults.items()) {
    std::string name = "--" + Settings::dashed(key);
    if (key == "max_cycles") name += ",--cycles";
    if (def.is_boolean()) {
      app.add_flag(name + ",!--no-" + Settings::dashed(key), switches[key]);
    } else {
      app.add_option(name, values[key]);
    }
  }

  const std::map<std::string, std::string> commands = {
      {"run", "Run the inference loop over a corpus"},
      {"episodes", "Generate training episodes for stage B, C or D"},
      {"decontaminate", "Remove train problems sharing n-gram windows with eval specs"},
      {"build-sft", "Build output-prediction and spec-derivation SFT data"},
      {"audit-quality", "Classify auditor tests of a run as valid/invalid and bug-revealing"},
      {"dapo-check", "Run the objective-math invariant suite"},
      {"filter", "Keep problems with a minimum number of tests"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<std::string> argv_store{"fixaudit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    nlohmann::ordered_json flags = nlohmann::ordered_json::object();
    for (const auto& [key, def] : defaults.items()) {
      std::string name = "--" + Settings::dashed(key);
      if (app.count(name) == 0) continue;
      flags[key] = def.is_boolean() ? nlohmann::ordered_json(switches[key]) : parse_scalar(def, key, values[key]);
    }
    const auto cfg = resolve_config(config_path, flags, env);
    const Settings settings{cfg};
    const auto command = app.get_subcommands().front()->get_name();
    if (command == "run") return cmd_run(settings, out, err);
    if (command == "episodes") return cmd_episodes(settings, out, err);
    if (command == "decontaminate") return cmd_decontaminate(settings, out, err);
    if (command == "build-sft") return cmd_build_sft(settings, out, err);
    if (command == "audit-quality") return cmd_audit_quality(settings, out, err);
    if (command == "dapo-check") return cmd_dapo_check(settings, out, err);
    return cmd_filter(settings, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const CorpusError& e) {
    err << "corpus error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fixaudit

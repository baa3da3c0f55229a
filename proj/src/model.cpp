#include "fixaudit/model.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

void GenerationRequest::validate() const {
  if (!(temperature >= 0.0)) throw ContractError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ContractError("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw ContractError("max_tokens must be positive");
}

CallRecorder::CallRecorder(std::string path) : path_(std::move(path)) {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write call log '" + path_ + "'");
}

void CallRecorder::record(const GenerationRequest& request, const std::string& response) {
  nlohmann::ordered_json o;
  o["role"] = to_string(request.role);
  o["prompt_sha256"] = sha256_hex(request.prompt);
  o["response"] = response;
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << o.dump() << '\n';
}

ModelGateway::ModelGateway(std::shared_ptr<ModelBackend> backend) : backend_(std::move(backend)) {
  if (!backend_) throw ContractError("model gateway needs a backend");
  label_ = backend_->label();
}

GenerationResponse ModelGateway::generate(const GenerationRequest& request) {
  request.validate();
  const std::uint64_t index = ++counter_;
  const auto start = std::chrono::steady_clock::now();
  std::string text = backend_->complete(request);
  const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (recorder_) recorder_->record(request, text);
  return {std::move(text), label_, latency, index};
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& script) {
  if (!script.is_object()) throw ConfigError("script must be a JSON object keyed by role");
  std::vector<ScriptRule> rules;
  std::vector<ScriptRule> wildcard;
  for (const auto& [key, entries] : script.items()) {
    auto& target = key == "*" ? wildcard : rules;
    std::optional<Role> role;
    if (key != "*") role = role_from_string(key);
    if (!entries.is_array()) throw ConfigError("script entry for '" + key + "' must be an array");
    // Bare strings under a role form one catch-all rule, in order.
    ScriptRule catch_all{role, {}, {}};
    for (const auto& e : entries) {
      if (e.is_string()) {
        catch_all.responses.push_back(e.get<std::string>());
      } else if (e.is_object()) {
        ScriptRule rule{role, e.value("match", std::string{}), {}};
        for (const auto& r : e.at("responses")) rule.responses.push_back(r.get<std::string>());
        target.push_back(std::move(rule));
      } else {
        throw ConfigError("script entry for '" + key + "' must hold strings or objects");
      }
    }
    if (!catch_all.responses.empty()) target.push_back(std::move(catch_all));
  }
  // Role-specific rules take precedence over "*" rules.
  for (auto& r : wildcard) rules.push_back(std::move(r));
  return std::make_shared<ScriptedBackend>(std::move(rules));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("script '" + path + "': " + e.what());
  }
}

std::string ScriptedBackend::complete(const GenerationRequest& request) {
  std::lock_guard lock(mutex_);
  bool matched = false;
  for (auto& rule : rules_) {
    if (rule.role && *rule.role != request.role) continue;
    if (!rule.match.empty() && request.prompt.find(rule.match) == std::string::npos) continue;
    matched = true;
    if (rule.responses.empty()) continue;
    std::string text = std::move(rule.responses.front());
    rule.responses.pop_front();
    return text;
  }
  throw BackendError(std::string(matched ? "script exhausted" : "no script rule matches") + " for role " +
                     std::string(to_string(request.role)));
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& r : rules_) n += r.responses.size();
  return n;
}

ReplayBackend::ReplayBackend(std::map<std::pair<std::string, std::string>, std::deque<std::string>> entries)
    : entries_(std::move(entries)) {}

std::shared_ptr<ReplayBackend> ReplayBackend::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open replay trace '" + path + "'");
  std::map<std::pair<std::string, std::string>, std::deque<std::string>> entries;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries[{j.at("role").get<std::string>(), j.at("prompt_sha256").get<std::string>()}].push_back(
          j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("replay trace line " + std::to_string(n) + ": " + e.what());
    }
  }
  return std::make_shared<ReplayBackend>(std::move(entries));
}

std::string ReplayBackend::complete(const GenerationRequest& request) {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find({std::string(to_string(request.role)), sha256_hex(request.prompt)});
  if (it == entries_.end() || it->second.empty()) {
    throw BackendError("replay trace has no response for this " + std::string(to_string(request.role)) + " prompt");
  }
  std::string text = std::move(it->second.front());
  it->second.pop_front();
  return text;
}

RemoteOptions remote_options_from_env() {
  RemoteOptions o;
  const char* endpoint = std::getenv(kEndpointEnv);
  if (endpoint == nullptr || *endpoint == '\0') {
    throw ConfigError(std::string("remote backend requires ") + kEndpointEnv + " to be set");
  }
  o.endpoint = endpoint;
  if (const char* key = std::getenv(kApiKeyEnv)) o.api_key = key;
  if (const char* model = std::getenv(kModelEnv); model && *model) o.model = model;
  return o;
}

RemoteBackend::RemoteBackend(RemoteOptions options, std::shared_ptr<HttpTransport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (options_.endpoint.empty()) throw ConfigError("remote backend endpoint is empty");
  if (options_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (!transport_) throw ConfigError("remote backend needs a transport");
}

void RemoteBackend::trace(const std::string& request_body, const HttpResult* result, const std::string& error) {
  if (!options_.trace_dir) return;
  nlohmann::ordered_json o;
  o["request"] = nlohmann::json::parse(request_body, nullptr, false);
  if (result) {
    o["status"] = result->status;
    o["response"] = result->body;
  }
  if (!error.empty()) o["error"] = error;
  std::lock_guard lock(trace_mutex_);
  std::filesystem::create_directories(*options_.trace_dir);
  std::ofstream out(std::filesystem::path(*options_.trace_dir) / "remote_http.jsonl", std::ios::app);
  out << o.dump() << '\n';
}

std::string RemoteBackend::complete(const GenerationRequest& request) {
  nlohmann::ordered_json body;
  body["model"] = options_.model;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", request.prompt}}});
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["max_tokens"] = request.max_tokens;
  if (request.seed) body["seed"] = *request.seed;
  const std::string payload = body.dump();

  std::vector<std::pair<std::string, std::string>> headers{{"Content-Type", "application/json"}};
  if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0 && options_.initial_backoff.count() > 0) {
      std::this_thread::sleep_for(options_.initial_backoff * (1 << (attempt - 1)));
    }
    ++attempts_;
    HttpResult result;
    try {
      result = transport_->post(options_.endpoint, payload, headers);
    } catch (const TransportError& e) {
      last_error = e.what();
      trace(payload, nullptr, last_error);
      continue;
    }
    trace(payload, &result, {});
    if (result.status == 429 || result.status >= 500) {
      last_error = "HTTP " + std::to_string(result.status);
      continue;
    }
    if (result.status < 200 || result.status >= 300) {
      throw BackendError("remote backend returned HTTP " + std::to_string(result.status) + ": " + result.body);
    }
    try {
      const auto j = nlohmann::json::parse(result.body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed chat-completions response: ") + e.what());
    }
  }
  throw BackendError("remote backend failed after " + std::to_string(options_.max_attempts) +
                     " attempts: " + last_error);
}

}  // namespace fixaudit

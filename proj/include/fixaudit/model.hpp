#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixaudit/dapo.hpp"

namespace fixaudit {

struct GenerationRequest {
  Role role = Role::Base;
  std::string prompt;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 8192;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct GenerationResponse {
  std::string text;
  std::string backend_label;
  double latency_seconds = 0.0;
  std::uint64_t invocation_index = 0;
};

/// Anything that turns a prompt into text.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual std::string complete(const GenerationRequest& request) = 0;
  virtual std::string label() const = 0;
};

/// Appends {role, prompt_sha256, response} lines; the replay backend reads them back.
class CallRecorder {
 public:
  explicit CallRecorder(std::string path);
  void record(const GenerationRequest& request, const std::string& response);
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::mutex mutex_;
};

/// Single entry point for generation. Each generate() call is one unit of
/// invocation budget, however many transport retries happen underneath.
class ModelGateway {
 public:
  explicit ModelGateway(std::shared_ptr<ModelBackend> backend);

  GenerationResponse generate(const GenerationRequest& request);
  std::uint64_t invocations() const noexcept { return counter_.load(); }
  const std::string& backend_label() const noexcept { return label_; }

  void set_recorder(std::shared_ptr<CallRecorder> recorder) { recorder_ = std::move(recorder); }

 private:
  std::shared_ptr<ModelBackend> backend_;
  std::shared_ptr<CallRecorder> recorder_;
  std::string label_;
  std::atomic<std::uint64_t> counter_{0};
};

struct ScriptRule {
  std::optional<Role> role;  // nullopt matches every role
  std::string match;         // substring of the prompt; empty matches everything
  std::deque<std::string> responses;
};

/// Deterministic test double. The first rule whose role and substring match
/// and that still has responses pops its next one. Rules keyed "*" are tried
/// after every role-specific rule.
class ScriptedBackend : public ModelBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules);

  /// {"<role>|*": [ {"match": "...", "responses": [...]} | "<response>" , ...], ...}
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& script);
  static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

  std::string complete(const GenerationRequest& request) override;
  std::string label() const override { return "scripted"; }

  std::size_t remaining() const;

 private:
  std::vector<ScriptRule> rules_;
  mutable std::mutex mutex_;
};

/// Serves responses recorded by CallRecorder, keyed by (role, prompt hash).
class ReplayBackend : public ModelBackend {
 public:
  static std::shared_ptr<ReplayBackend> from_file(const std::string& path);
  explicit ReplayBackend(std::map<std::pair<std::string, std::string>, std::deque<std::string>> entries);

  std::string complete(const GenerationRequest& request) override;
  std::string label() const override { return "replay"; }

 private:
  std::map<std::pair<std::string, std::string>, std::deque<std::string>> entries_;
  std::mutex mutex_;
};

struct HttpResult {
  int status = 0;
  std::string body;
};

/// POST transport. Implementations throw TransportError on connection-level failure.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& url, const std::string& body,
                          const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// cpp-httplib backed transport.
std::shared_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(600));

struct RemoteOptions {
  std::string endpoint;  // full chat-completions URL
  std::string api_key;
  std::string model = "default";
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::optional<std::string> trace_dir;
};

inline constexpr const char* kEndpointEnv = "FIXAUDIT_ENDPOINT";
inline constexpr const char* kApiKeyEnv = "FIXAUDIT_API_KEY";
inline constexpr const char* kModelEnv = "FIXAUDIT_MODEL";

/// Throws ConfigError when the endpoint variable is unset.
RemoteOptions remote_options_from_env();

/// Chat-completions client. Transport failures, 429 and 5xx are retried with
/// exponential backoff; anything else is a hard error.
class RemoteBackend : public ModelBackend {
 public:
  RemoteBackend(RemoteOptions options, std::shared_ptr<HttpTransport> transport);

  std::string complete(const GenerationRequest& request) override;
  std::string label() const override { return "remote"; }

  std::uint64_t attempts() const noexcept { return attempts_.load(); }

 private:
  void trace(const std::string& request_body, const HttpResult* result, const std::string& error);

  RemoteOptions options_;
  std::shared_ptr<HttpTransport> transport_;
  std::atomic<std::uint64_t> attempts_{0};
  std::mutex trace_mutex_;
};

}  // namespace fixaudit

#include "fixaudit/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fixaudit/error.hpp"
#include "fixaudit/util.hpp"

namespace fixaudit {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

void ExecutionLimits::validate() const {
  if (!(wall_clock_timeout.count() > 0.0)) throw ContractError("timeout must be > 0");
  if (max_output_bytes == 0) throw ContractError("max_output_bytes must be > 0");
  if (max_memory && *max_memory == 0) throw ContractError("max_memory must be > 0 when set");
}

std::string_view to_string(ExecutionStatus s) {
  switch (s) {
    case ExecutionStatus::Ok: return "ok";
    case ExecutionStatus::Timeout: return "timeout";
    case ExecutionStatus::RuntimeError: return "runtime_error";
    case ExecutionStatus::OutputTruncated: return "output_truncated";
    case ExecutionStatus::SpawnError: return "spawn_error";
  }
  return "unknown";
}

std::vector<std::string> Interpreter::argv(const std::string& program_path) const {
  std::vector<std::string> args;
  std::istringstream ss(command_template);
  std::string word;
  bool substituted = false;
  while (ss >> word) {
    const auto pos = word.find("{program}");
    if (pos != std::string::npos) {
      word.replace(pos, 9, program_path);
      substituted = true;
    }
    args.push_back(word);
  }
  if (args.empty()) throw ContractError("empty interpreter command template");
  if (!substituted) throw ContractError("interpreter template lacks a {program} placeholder");
  return args;
}

namespace {

/// Unique temporary directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "fixaudit-run-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw SpawnError(std::string("mkdtemp: ") + std::strerror(errno));
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  int get() const noexcept { return fd_; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  return {Fd(fds[0]), Fd(fds[1])};
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

ExecutionResult spawn_failure(std::string message, Clock::time_point start) {
  ExecutionResult r;
  r.status = ExecutionStatus::SpawnError;
  r.stderr_text = std::move(message);
  r.duration_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

}  // namespace

ExecutionResult run_program(std::string_view program, std::string_view input, const ExecutionLimits& limits,
                            const Interpreter& interpreter) {
  limits.validate();
  ignore_sigpipe();
  const auto start = Clock::now();

  TempDir dir;
  const fs::path program_path = dir.path() / interpreter.program_filename;
  write_file(program_path.string(), program);

  const auto args = interpreter.argv(program_path.string());
  std::vector<char*> c_args;
  c_args.reserve(args.size() + 1);
  for (const auto& a : args) c_args.push_back(const_cast<char*>(a.c_str()));
  c_args.push_back(nullptr);
  const std::string workdir = dir.path().string();

  Pipe in = make_pipe();
  Pipe out = make_pipe();
  Pipe err = make_pipe();
  Pipe exec_status = make_pipe();

  const pid_t pid = ::fork();
  if (pid < 0) return spawn_failure(std::string("fork: ") + std::strerror(errno), start);
  if (pid == 0) {
    // Child: async-signal-safe calls only.
    ::setpgid(0, 0);
    ::signal(SIGPIPE, SIG_DFL);
    if (::chdir(workdir.c_str()) != 0) {
      const int e = errno;
      [[maybe_unused]] auto n = ::write(exec_status.write.get(), &e, sizeof e);
      ::_exit(127);
    }
    if (limits.max_memory) {
      rlimit rl{static_cast<rlim_t>(*limits.max_memory), static_cast<rlim_t>(*limits.max_memory)};
      ::setrlimit(RLIMIT_AS, &rl);
    }
    ::dup2(in.read.get(), STDIN_FILENO);
    ::dup2(out.write.get(), STDOUT_FILENO);
    ::dup2(err.write.get(), STDERR_FILENO);
    ::execvp(c_args[0], c_args.data());
    const int e = errno;
    [[maybe_unused]] auto n = ::write(exec_status.write.get(), &e, sizeof e);
    ::_exit(127);
  }

  ::setpgid(pid, pid);
  in.read.reset();
  out.write.reset();
  err.write.reset();
  exec_status.write.reset();

  int child_errno = 0;
  const auto got = ::read(exec_status.read.get(), &child_errno, sizeof child_errno);
  if (got == static_cast<ssize_t>(sizeof child_errno)) {
    int ws = 0;
    ::waitpid(pid, &ws, 0);
    return spawn_failure("cannot start '" + args[0] + "': " + std::strerror(child_errno), start);
  }

  ::fcntl(in.write.get(), F_SETFL, O_NONBLOCK);
  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(limits.wall_clock_timeout);

  ExecutionResult result;
  std::size_t written = 0;
  bool truncated = false;
  bool timed_out = false;
  if (input.empty()) in.write.reset();

  auto kill_group = [pid] { ::kill(-pid, SIGKILL); };

  char buf[65536];
  while (out.read.get() >= 0 || err.read.get() >= 0) {
    const auto now = Clock::now();
    if (now >= deadline) {
      timed_out = true;
      kill_group();
      break;
    }
    pollfd fds[3];
    nfds_t count = 0;
    int out_idx = -1, err_idx = -1, in_idx = -1;
    if (out.read.get() >= 0) {
      out_idx = static_cast<int>(count);
      fds[count++] = {out.read.get(), POLLIN, 0};
    }
    if (err.read.get() >= 0) {
      err_idx = static_cast<int>(count);
      fds[count++] = {err.read.get(), POLLIN, 0};
    }
    if (in.write.get() >= 0) {
      in_idx = static_cast<int>(count);
      fds[count++] = {in.write.get(), POLLOUT, 0};
    }
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const int ready = ::poll(fds, count, static_cast<int>(std::min<long long>(wait_ms, 100)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      kill_group();
      break;
    }
    if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const auto n = ::write(in.write.get(), input.data() + written, input.size() - written);
      if (n > 0) written += static_cast<std::size_t>(n);
      if ((n < 0 && errno != EAGAIN) || written == input.size()) in.write.reset();
    }
    auto drain = [&](int idx, Fd& fd, std::string& sink, bool is_stdout) {
      if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
      const auto n = ::read(fd.get(), buf, sizeof buf);
      if (n <= 0) {
        if (n == 0 || errno != EAGAIN) fd.reset();
        return;
      }
      const std::size_t room = limits.max_output_bytes - std::min(limits.max_output_bytes, sink.size());
      sink.append(buf, std::min(room, static_cast<std::size_t>(n)));
      if (is_stdout && static_cast<std::size_t>(n) > room) {
        truncated = true;
        kill_group();
        fd.reset();
      }
    };
    drain(out_idx, out.read, result.stdout_text, true);
    drain(err_idx, err.read, result.stderr_text, false);
    if (truncated) break;
  }
  in.write.reset();

  int ws = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &ws, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) break;
    if (!timed_out && !truncated && Clock::now() >= deadline) {
      timed_out = true;
      kill_group();
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  // Reap stragglers left in the group.
  ::kill(-pid, SIGKILL);

  result.duration_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (WIFEXITED(ws)) {
    result.exit_code = WEXITSTATUS(ws);
  } else if (WIFSIGNALED(ws)) {
    result.exit_code = -WTERMSIG(ws);
  }
  if (timed_out) {
    result.status = ExecutionStatus::Timeout;
  } else if (truncated) {
    result.status = ExecutionStatus::OutputTruncated;
  } else if (WIFEXITED(ws) && WEXITSTATUS(ws) == 0) {
    result.status = ExecutionStatus::Ok;
  } else {
    result.status = ExecutionStatus::RuntimeError;
  }
  return result;
}

namespace {

std::vector<std::string> normalized_lines(std::string_view text, const ComparisonPolicy& policy) {
  std::vector<std::string> lines = split_lines(text);
  if (policy.trim_trailing_whitespace) {
    for (auto& l : lines) l = std::string(trim_right(l));
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
  }
  if (policy.collapse_internal_blank_lines) {
    std::vector<std::string> collapsed;
    for (auto& l : lines) {
      const bool blank = trim(l).empty();
      if (blank && !collapsed.empty() && trim(collapsed.back()).empty()) continue;
      collapsed.push_back(std::move(l));
    }
    lines = std::move(collapsed);
  }
  return lines;
}

std::vector<std::string_view> whitespace_tokens(const std::vector<std::string>& lines) {
  std::vector<std::string_view> tokens;
  for (const auto& line : lines) {
    std::string_view s = line;
    while (!s.empty()) {
      const auto b = s.find_first_not_of(" \t\r\f\v");
      if (b == std::string_view::npos) break;
      s.remove_prefix(b);
      const auto e = s.find_first_of(" \t\r\f\v");
      tokens.push_back(s.substr(0, e));
      if (e == std::string_view::npos) break;
      s.remove_prefix(e);
    }
  }
  return tokens;
}

std::optional<double> parse_number(std::string_view token) {
  double v = 0.0;
  const char* first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

bool compare_outputs(std::string_view actual, std::string_view expected, const ComparisonPolicy& policy) {
  if (actual == expected) return true;
  if (policy.float_tolerance && *policy.float_tolerance < 0.0) throw ContractError("float_tolerance must be >= 0");
  const auto a = normalized_lines(actual, policy);
  const auto e = normalized_lines(expected, policy);
  if (!policy.float_tolerance) return a == e;

  const double tol = *policy.float_tolerance;
  const auto ta = whitespace_tokens(a);
  const auto te = whitespace_tokens(e);
  if (ta.size() != te.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i] == te[i]) continue;
    const auto x = parse_number(ta[i]);
    const auto y = parse_number(te[i]);
    if (!x || !y) return false;
    if (std::fabs(*x - *y) > tol * std::max(1.0, std::fabs(*y))) return false;
  }
  return true;
}

Sandbox::Sandbox() : Sandbox(Options{}) {}

Sandbox::Sandbox(Options options) : options_(std::move(options)) {
  options_.limits.validate();
  if (options_.policy.float_tolerance && *options_.policy.float_tolerance < 0.0) {
    throw ContractError("float_tolerance must be >= 0");
  }
  std::size_t slots = options_.max_concurrency;
  if (slots == 0) slots = std::max(1u, std::thread::hardware_concurrency());
  options_.max_concurrency = slots;
  slots_ = std::make_shared<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(slots));
}

std::size_t Sandbox::executions() const {
  std::lock_guard lock(cache_mutex_);
  return executions_;
}

ExecutionResult Sandbox::execute(std::string_view program, std::string_view input) const {
  slots_->acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{*slots_};
  {
    std::lock_guard lock(cache_mutex_);
    ++executions_;
  }
  return run_program(program, input, options_.limits, options_.interpreter);
}

ExecutionResult Sandbox::run(std::string_view program, std::string_view input) const {
  std::string key;
  if (options_.cache || options_.trace_dir) {
    key = sha256_hex(std::to_string(program.size()) + ":" + std::string(program) + std::string(input));
  }
  if (options_.cache) {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  ExecutionResult result = execute(program, input);
  if (result.status == ExecutionStatus::SpawnError) throw SpawnError(result.stderr_text);
  if (options_.trace_dir) persist(key, program, input, result);
  if (options_.cache) {
    std::lock_guard lock(cache_mutex_);
    cache_.try_emplace(key, result);
  }
  return result;
}

void Sandbox::persist(const std::string& key, std::string_view program, std::string_view input,
                      const ExecutionResult& result) const {
  const fs::path dir = fs::path(*options_.trace_dir) / "runs" / key.substr(0, 16);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return;
  write_file((dir / options_.interpreter.program_filename).string(), program);
  write_file((dir / "stdin").string(), input);
  write_file((dir / "stdout").string(), result.stdout_text);
  write_file((dir / "stderr").string(), result.stderr_text);
  nlohmann::ordered_json meta;
  meta["status"] = to_string(result.status);
  meta["exit_code"] = result.exit_code;
  write_file((dir / "result.json").string(), meta.dump(2) + "\n");
}

std::string Sandbox::reference_output(const std::optional<std::string>& reference, std::string_view input) const {
  if (!reference) throw UncheckableError("reference solution required but absent");
  const auto r = run(*reference, input);
  if (!r.ok()) {
    throw UncheckableError("reference solution did not finish cleanly (" + std::string(to_string(r.status)) + ")");
  }
  return r.stdout_text;
}

bool Sandbox::passes(std::string_view program, const TestCase& test,
                     const std::optional<std::string>& reference) const {
  const std::string expected =
      test.expected_output ? *test.expected_output : reference_output(reference, test.input);
  if (trim(program).empty()) return false;
  const auto r = run(program, test.input);
  return r.ok() && same_output(r.stdout_text, expected);
}

}  // namespace fixaudit

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fixaudit {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Every configuration key with its default value.
nlohmann::ordered_json default_config();

/// Layers defaults < config file < flags < environment (FIXAUDIT_<KEY>).
/// Unknown keys and type mismatches raise ConfigError.
nlohmann::ordered_json resolve_config(const std::optional<std::string>& config_path,
                                      const nlohmann::ordered_json& flags, const EnvLookup& env);

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
/// Returns 0 on success, 1 on a hard failure and 2 on a usage or config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env);

}  // namespace fixaudit

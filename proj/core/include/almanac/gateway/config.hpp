#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace almanac::gateway {

struct BackendConfig {
    std::string kind = "stub";  ///< stub | replay | external
    std::string endpoint;
    std::string model = "default";
    std::string credentials_env;
    std::filesystem::path replay_path;  ///< transcript to replay
};

/**
 * @brief Service settings.
 *
 * File format: one `key = value` per line, `#` starts a comment. Every key
 * can be overridden by an environment variable `ALMANAC_<KEY>` with dots
 * turned into underscores, e.g. `ALMANAC_BACKEND_KIND`.
 */
struct GatewayConfig {
    std::filesystem::path store_snapshot_path;  ///< restored at startup when present, rewritten after writes
    std::filesystem::path bundle_path;          ///< ingested when there is no snapshot
    std::filesystem::path schema_path;          ///< empty: built-in registry
    std::filesystem::path template_path;
    std::filesystem::path corpus_dir;
    std::filesystem::path calculators_dir;
    std::filesystem::path actions_path;    ///< approval queue log; empty: memory only
    std::filesystem::path transcript_dir;  ///< per-session planner transcripts; empty: none
    BackendConfig backend;
    bool auto_approve_readonly = false;
    bool no_external = false;
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::size_t context_budget = 4000;
    std::size_t retry_budget = 1;
    std::string token;  ///< bearer token; from ALMANAC_TOKEN only, never from the file
};

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

/// Reads the process environment.
EnvLookup process_env();

/// Relative paths resolve against `base_dir`. Throws MalformedConfig.
GatewayConfig parse_config(std::string_view text, const EnvLookup& env = process_env(),
                           const std::filesystem::path& base_dir = {});
GatewayConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env());

/// Checks budgets, backend kind and that configured paths exist. Throws MalformedConfig.
void validate(const GatewayConfig& config);

}  // namespace almanac::gateway

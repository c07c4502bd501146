#include "almanac/gateway/config.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"

#include <cstdlib>
#include <map>
#include <set>

namespace almanac::gateway {

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::MalformedConfig, why); }

std::string env_name(std::string key) {
    for (char& c : key) c = c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return "ALMANAC_" + key;
}

bool parse_bool(const std::string& key, const std::string& v) {
    const auto s = to_lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad(key + ": expected a boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const auto n = std::stoll(v, &used);
        if (used != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        bad(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

}  // namespace

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        return v ? std::optional<std::string>(v) : std::nullopt;
    };
}

GatewayConfig parse_config(std::string_view text, const EnvLookup& env, const std::filesystem::path& base_dir) {
    static const std::set<std::string> keys = {
        "store_snapshot_path", "bundle_path",  "schema_path",     "template_path",         "corpus_dir",
        "calculators_dir",     "actions_path", "transcript_dir",  "backend.kind",          "backend.endpoint",
        "backend.model",       "backend.credentials_env",        "backend.replay_path",   "auto_approve_readonly",
        "no_external",         "bind_address", "port",            "context_budget",        "retry_budget"};

    std::map<std::string, std::string> values;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) bad("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        if (!keys.count(key)) bad("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        values[key] = std::string(trim(line.substr(eq + 1)));
    }
    if (env) {
        for (const auto& key : keys) {
            if (auto v = env(env_name(key))) values[key] = *v;
        }
    }

    auto path = [&](const std::string& key) -> std::filesystem::path {
        auto it = values.find(key);
        if (it == values.end() || it->second.empty()) return {};
        std::filesystem::path p(it->second);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    auto text_of = [&](const std::string& key, std::string fallback) {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    };

    GatewayConfig c;
    c.store_snapshot_path = path("store_snapshot_path");
    c.bundle_path = path("bundle_path");
    c.schema_path = path("schema_path");
    c.template_path = path("template_path");
    c.corpus_dir = path("corpus_dir");
    c.calculators_dir = path("calculators_dir");
    c.actions_path = path("actions_path");
    c.transcript_dir = path("transcript_dir");
    c.backend.kind = text_of("backend.kind", c.backend.kind);
    c.backend.endpoint = text_of("backend.endpoint", "");
    c.backend.model = text_of("backend.model", c.backend.model);
    c.backend.credentials_env = text_of("backend.credentials_env", "");
    c.backend.replay_path = path("backend.replay_path");
    if (values.count("auto_approve_readonly")) c.auto_approve_readonly = parse_bool("auto_approve_readonly", values["auto_approve_readonly"]);
    if (values.count("no_external")) c.no_external = parse_bool("no_external", values["no_external"]);
    c.bind_address = text_of("bind_address", c.bind_address);
    if (values.count("port")) c.port = static_cast<int>(parse_size("port", values["port"]));
    if (values.count("context_budget")) c.context_budget = parse_size("context_budget", values["context_budget"]);
    if (values.count("retry_budget")) c.retry_budget = parse_size("retry_budget", values["retry_budget"]);
    if (env) {
        if (auto token = env("ALMANAC_TOKEN")) c.token = *token;
    }
    return c;
}

GatewayConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
    return parse_config(read_file(path), env, path.parent_path());
}

void validate(const GatewayConfig& c) {
    if (c.context_budget == 0) bad("context_budget must be positive");
    if (c.port < 0 || c.port > 65535) bad("port out of range");
    const auto& kind = c.backend.kind;
    if (kind != "stub" && kind != "replay" && kind != "external") bad("backend.kind must be stub, replay or external");
    if (kind == "external" && c.no_external) bad("external backend configured while no_external is set");
    if (kind == "external" && c.backend.endpoint.empty()) bad("backend.endpoint is required for the external backend");
    if (kind == "replay" && c.backend.replay_path.empty()) bad("backend.replay_path is required for the replay backend");

    auto must_exist = [](const std::filesystem::path& p, const char* key) {
        if (!p.empty() && !std::filesystem::exists(p)) bad(std::string(key) + ": " + p.string() + " does not exist");
    };
    must_exist(c.bundle_path, "bundle_path");
    must_exist(c.schema_path, "schema_path");
    must_exist(c.template_path, "template_path");
    must_exist(c.corpus_dir, "corpus_dir");
    must_exist(c.calculators_dir, "calculators_dir");
    must_exist(c.backend.replay_path, "backend.replay_path");
    if (c.template_path.empty()) bad("template_path is required");
    if (c.store_snapshot_path.empty() && c.bundle_path.empty()) bad("set store_snapshot_path or bundle_path");
    if (!c.store_snapshot_path.empty() && !std::filesystem::exists(c.store_snapshot_path) && c.bundle_path.empty()) {
        bad("store_snapshot_path: " + c.store_snapshot_path.string() + " does not exist and no bundle_path is set");
    }
}

}  // namespace almanac::gateway

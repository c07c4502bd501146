#pragma once

#include "almanac/common/clock.hpp"
#include "almanac/ehrqa/template.hpp"
#include "almanac/exec/executor.hpp"
#include "almanac/gateway/config.hpp"
#include "almanac/knowledge/toolkit.hpp"
#include "almanac/planner/planner.hpp"
#include "almanac/store/store.hpp"
#include "almanac/tools/registry.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace almanac::gateway {

struct Session {
    std::string session_id;
    std::string actor;
    std::optional<fhir::ResourceId> active_patient;
    fhir::DateTime created_at;

    nlohmann::json to_json() const;
};

/// What the HTTP surface binds together.
struct Services {
    std::shared_ptr<store::Store> store;
    tools::Registry registry;
    std::vector<ehrqa::QuestionTemplate> templates;
    knowledge::Toolkit toolkit;
    std::shared_ptr<planner::PlannerBackend> backend;
};

struct Options {
    std::string token;  ///< required bearer token
    bool auto_approve_readonly = false;
    std::size_t context_budget = 4000;
    std::size_t retry_budget = 1;
    std::filesystem::path transcript_dir;       ///< empty: transcripts stay in memory
    std::filesystem::path actions_path;         ///< empty: approval queue stays in memory
    std::filesystem::path store_snapshot_path;  ///< empty: store is not written back
    Clock clock = system_clock();
};

/// Planner backend for `config`. Throws BackendUnavailable or MalformedRecord.
std::shared_ptr<planner::PlannerBackend> make_backend(const BackendConfig& config, bool no_external,
                                                      const std::vector<ehrqa::QuestionTemplate>& templates);

/**
 * @brief HTTP+JSON service over one store.
 *
 * Every route except `GET /health` requires `Authorization: Bearer <token>`.
 * GET routes never write. Routes and payloads are listed in docs/api.md.
 */
class Gateway {
public:
    Gateway(Services services, Options options);
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Validates `config`, loads every input, restores persisted state.
    static std::unique_ptr<Gateway> from_config(const GatewayConfig& config);

    /// Binds and serves on a background thread. Port 0 picks a free port; returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Binds and serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    store::Store& store();
    exec::Executor& executor();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace almanac::gateway

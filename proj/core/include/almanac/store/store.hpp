#pragma once

#include "almanac/common/clock.hpp"
#include "almanac/fhir/model.hpp"
#include "almanac/store/query.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace almanac::store {

using fhir::FhirResource;
using fhir::ResourceId;
using fhir::ResourceType;

/// Who caused a write. Executor writes carry the approving action and step.
struct WriteContext {
    std::string actor = "system";
    std::optional<std::string> action_id;
    std::optional<std::string> step_id;
};

struct AuditRecord {
    std::uint64_t seq = 0;
    fhir::DateTime timestamp;
    std::string actor;
    std::string operation;  ///< "ingest" or "create"
    std::optional<std::string> action_id;
    std::optional<std::string> step_id;
    FhirResource resource;

    nlohmann::json to_json() const;
    static AuditRecord from_json(const nlohmann::json& j);
};

struct HistoryEvent {
    fhir::DateTime timestamp;
    FhirResource resource;
};

struct PatientHistory {
    fhir::Patient patient;
    std::vector<HistoryEvent> events;  ///< ascending by timestamp, then type, then id
};

/**
 * @brief In-memory FHIR store with append-only audit log and snapshot files.
 *
 * Readers share a lock; writers are serialized. Every write validates the
 * resource and checks that its subject and encounter references resolve.
 */
class Store {
public:
    explicit Store(Clock clock = system_clock());

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// All-or-nothing insert. Throws DuplicateId, DanglingReference or InvariantViolation.
    std::size_t ingest_bundle(const std::vector<FhirResource>& bundle,
                              const WriteContext& ctx = {"ingest", std::nullopt, std::nullopt});

    /// Inserts one resource. An empty id is replaced by a generated one.
    ResourceId create(const FhirResource& resource, const WriteContext& ctx = {});

    /// The id create() would assign to a resource of `type` right now.
    std::string next_id(ResourceType type) const;

    FhirResource get(const ResourceId& id) const;
    std::optional<FhirResource> find(const ResourceId& id) const;
    bool contains(const ResourceId& id) const;

    /// Throws UnknownField or InvalidQuery.
    std::vector<FhirResource> search(const SearchQuery& query) const;

    PatientHistory patient_history(const ResourceId& patient) const;

    /// Every resource ordered by type then id.
    std::vector<FhirResource> all() const;
    std::size_t size() const;
    std::size_t count(ResourceType type) const;
    std::vector<AuditRecord> audit_log() const;

    /// Snapshot file text (header line plus canonical resources).
    std::string snapshot_text() const;
    /// SHA-256 of snapshot_text().
    std::string content_digest() const;

    /// Writes `path` and the `path.audit` sidecar.
    void snapshot(const std::filesystem::path& path) const;
    /// Replaces the contents with a snapshot. Throws CorruptSnapshot.
    void restore(const std::filesystem::path& path);
    void restore_text(std::string_view snapshot, std::optional<std::string_view> audit_jsonl = std::nullopt);

    /// Rebuilds store state by applying `log` to this (empty) store.
    void replay(const std::vector<AuditRecord>& log);

    const Clock& clock() const noexcept { return clock_; }

private:
    using Key = std::pair<ResourceType, std::string>;

    void check_references_locked(const FhirResource& r, const std::map<Key, const FhirResource*>& pending) const;
    void insert_locked(const FhirResource& r);
    std::string next_id_locked(ResourceType type) const;
    void append_audit_locked(const FhirResource& r, const std::string& operation, const WriteContext& ctx,
                             fhir::DateTime at);

    Clock clock_;
    mutable std::shared_mutex mutex_;
    std::map<Key, FhirResource> resources_;
    std::map<std::string, std::vector<Key>> by_patient_;
    std::vector<AuditRecord> audit_;
};

/// Snapshot file header line.
inline constexpr std::string_view kSnapshotHeader = R"({"format":"almanac-snapshot","version":1})";

}  // namespace almanac::store

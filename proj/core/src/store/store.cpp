#include "almanac/store/store.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/hash.hpp"
#include "almanac/common/text.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <sstream>

namespace almanac::store {

using fhir::DateTime;
using nlohmann::json;

namespace {

std::string_view id_prefix(ResourceType type) {
    switch (type) {
        case ResourceType::Patient: return "pat";
        case ResourceType::Encounter: return "enc";
        case ResourceType::MedicationRequest: return "mr";
        case ResourceType::Observation: return "obs";
        case ResourceType::ServiceRequest: return "sr";
        case ResourceType::Condition: return "cond";
        case ResourceType::AllergyIntolerance: return "alg";
        case ResourceType::Procedure: return "proc";
        case ResourceType::CommunicationRequest: return "comm";
    }
    return "res";
}

std::vector<AuditRecord> parse_audit(std::string_view text) {
    std::vector<AuditRecord> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(Errc::CorruptSnapshot, "audit sidecar line is not JSON");
        out.push_back(AuditRecord::from_json(j));
    }
    return out;
}

}  // namespace

// =============================================================================
// AuditRecord
// =============================================================================

json AuditRecord::to_json() const {
    json j{{"seq", seq},
           {"timestamp", timestamp.to_string()},
           {"actor", actor},
           {"operation", operation},
           {"resource", fhir::to_json(resource)}};
    if (action_id) j["action_id"] = *action_id;
    if (step_id) j["step_id"] = *step_id;
    return j;
}

AuditRecord AuditRecord::from_json(const json& j) {
    try {
        auto ts = DateTime::parse(j.at("timestamp").get<std::string>());
        if (!ts) throw Error(Errc::CorruptSnapshot, "audit timestamp");
        AuditRecord r{j.at("seq").get<std::uint64_t>(),
                      *ts,
                      j.at("actor").get<std::string>(),
                      j.at("operation").get<std::string>(),
                      std::nullopt,
                      std::nullopt,
                      fhir::from_json(j.at("resource"))};
        if (j.contains("action_id")) r.action_id = j.at("action_id").get<std::string>();
        if (j.contains("step_id")) r.step_id = j.at("step_id").get<std::string>();
        return r;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(Errc::CorruptSnapshot, std::string("audit record: ") + e.what());
    }
}

// =============================================================================
// Store
// =============================================================================

Store::Store(Clock clock) : clock_(std::move(clock)) {}

void Store::check_references_locked(const FhirResource& r, const std::map<Key, const FhirResource*>& pending) const {
    auto resolves = [&](const ResourceId& ref) {
        Key key{ref.type, ref.id};
        return resources_.count(key) || pending.count(key);
    };
    if (r.type() != ResourceType::Patient) {
        auto subject = r.subject();
        if (subject && !resolves(*subject)) throw Error(Errc::DanglingReference, subject->reference());
    }
    if (r.type() != ResourceType::Encounter) {
        auto encounter = r.encounter();
        if (encounter && !resolves(*encounter)) throw Error(Errc::DanglingReference, encounter->reference());
    }
}

void Store::insert_locked(const FhirResource& r) {
    Key key{r.type(), r.id()};
    resources_.emplace(key, r);
    if (r.type() != ResourceType::Patient) {
        auto subject = r.subject();
        if (subject) by_patient_[subject->id].push_back(key);
    }
}

void Store::append_audit_locked(const FhirResource& r, const std::string& operation, const WriteContext& ctx,
                                DateTime at) {
    audit_.push_back({audit_.size() + 1, at, ctx.actor, operation, ctx.action_id, ctx.step_id, r});
}

std::size_t Store::ingest_bundle(const std::vector<FhirResource>& bundle, const WriteContext& ctx) {
    std::unique_lock lock(mutex_);
    std::map<Key, const FhirResource*> pending;
    for (const auto& r : bundle) {
        fhir::ensure_valid(r);
        Key key{r.type(), r.id()};
        if (resources_.count(key) || !pending.emplace(key, &r).second) {
            throw Error(Errc::DuplicateId, r.resource_id().reference());
        }
    }
    for (const auto& r : bundle) check_references_locked(r, pending);

    DateTime at = clock_();
    for (const auto& r : bundle) {
        insert_locked(r);
        append_audit_locked(r, "ingest", ctx, at);
    }
    return bundle.size();
}

std::string Store::next_id_locked(ResourceType type) const {
    std::size_t n = 0;
    auto lo = resources_.lower_bound(Key{type, ""});
    for (auto it = lo; it != resources_.end() && it->first.first == type; ++it) ++n;
    for (std::size_t k = n + 1;; ++k) {
        std::string candidate = std::string(id_prefix(type)) + "-" + std::to_string(k);
        if (!resources_.count(Key{type, candidate})) return candidate;
    }
}

std::string Store::next_id(ResourceType type) const {
    std::shared_lock lock(mutex_);
    return next_id_locked(type);
}

ResourceId Store::create(const FhirResource& resource, const WriteContext& ctx) {
    std::unique_lock lock(mutex_);
    FhirResource r = resource.id().empty() ? resource.with_id(next_id_locked(resource.type())) : resource;
    fhir::ensure_valid(r);
    if (resources_.count(Key{r.type(), r.id()})) throw Error(Errc::DuplicateId, r.resource_id().reference());
    check_references_locked(r, {});
    insert_locked(r);
    append_audit_locked(r, "create", ctx, clock_());
    return r.resource_id();
}

FhirResource Store::get(const ResourceId& id) const {
    auto found = find(id);
    if (!found) throw Error(Errc::NotFound, id.reference());
    return *found;
}

std::optional<FhirResource> Store::find(const ResourceId& id) const {
    std::shared_lock lock(mutex_);
    auto it = resources_.find(Key{id.type, id.id});
    if (it == resources_.end()) return std::nullopt;
    return it->second;
}

bool Store::contains(const ResourceId& id) const {
    std::shared_lock lock(mutex_);
    return resources_.count(Key{id.type, id.id}) > 0;
}

std::vector<FhirResource> Store::search(const SearchQuery& query) const {
    check_query(query);
    std::shared_lock lock(mutex_);

    // Narrow by patient when an eq filter on it is present.
    const Filter* patient_filter = nullptr;
    for (const auto& f : query.filters) {
        if (f.field == "patient" && f.op == FilterOp::Eq) patient_filter = &f;
    }

    std::vector<const FhirResource*> hits;
    if (patient_filter) {
        std::string_view pid = patient_filter->value;
        if (auto slash = pid.find('/'); slash != std::string_view::npos) pid = pid.substr(slash + 1);
        auto it = by_patient_.find(std::string(pid));
        if (it != by_patient_.end()) {
            for (const auto& key : it->second) {
                if (key.first != query.type) continue;
                const auto& r = resources_.at(key);
                if (matches(query, r)) hits.push_back(&r);
            }
        }
    } else {
        auto lo = resources_.lower_bound(Key{query.type, ""});
        for (auto it = lo; it != resources_.end() && it->first.first == query.type; ++it) {
            if (matches(query, it->second)) hits.push_back(&it->second);
        }
    }

    std::sort(hits.begin(), hits.end(),
              [&](const FhirResource* a, const FhirResource* b) { return result_before(query, *a, *b); });
    if (hits.size() > query.limit) hits.resize(query.limit);

    std::vector<FhirResource> out;
    out.reserve(hits.size());
    for (const auto* r : hits) out.push_back(*r);
    return out;
}

PatientHistory Store::patient_history(const ResourceId& patient) const {
    if (patient.type != ResourceType::Patient) throw Error(Errc::NotFound, patient.reference());
    std::shared_lock lock(mutex_);
    auto pit = resources_.find(Key{ResourceType::Patient, patient.id});
    if (pit == resources_.end()) throw Error(Errc::NotFound, patient.reference());

    PatientHistory history;
    history.patient = *pit->second.get_if<fhir::Patient>();
    auto it = by_patient_.find(patient.id);
    if (it != by_patient_.end()) {
        for (const auto& key : it->second) {
            const auto& r = resources_.at(key);
            history.events.push_back({*r.primary_time(), r});
        }
    }
    std::sort(history.events.begin(), history.events.end(), [](const HistoryEvent& a, const HistoryEvent& b) {
        if (a.timestamp.epoch_seconds() != b.timestamp.epoch_seconds()) {
            return a.timestamp.epoch_seconds() < b.timestamp.epoch_seconds();
        }
        if (a.resource.type() != b.resource.type()) return a.resource.type() < b.resource.type();
        return a.resource.id() < b.resource.id();
    });
    return history;
}

std::vector<FhirResource> Store::all() const {
    std::shared_lock lock(mutex_);
    std::vector<FhirResource> out;
    out.reserve(resources_.size());
    for (const auto& [key, r] : resources_) out.push_back(r);
    return out;
}

std::size_t Store::size() const {
    std::shared_lock lock(mutex_);
    return resources_.size();
}

std::size_t Store::count(ResourceType type) const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (auto it = resources_.lower_bound(Key{type, ""}); it != resources_.end() && it->first.first == type; ++it) ++n;
    return n;
}

std::vector<AuditRecord> Store::audit_log() const {
    std::shared_lock lock(mutex_);
    return audit_;
}

std::string Store::snapshot_text() const {
    std::shared_lock lock(mutex_);
    std::string out(kSnapshotHeader);
    out += '\n';
    // Patients, then Encounters, then the rest: restore can insert in file order.
    for (const auto& [key, r] : resources_) {
        out += fhir::serialize_resource(r);
        out += '\n';
    }
    return out;
}

std::string Store::content_digest() const {
    return sha256_hex(snapshot_text());
}

void Store::snapshot(const std::filesystem::path& path) const {
    std::string audit;
    {
        std::shared_lock lock(mutex_);
        for (const auto& rec : audit_) {
            audit += rec.to_json().dump();
            audit += '\n';
        }
    }
    write_file(path, snapshot_text());
    write_file(path.string() + ".audit", audit);
}

void Store::restore(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw Error(Errc::CorruptSnapshot, e.detail());
    }
    std::filesystem::path audit_path = path.string() + ".audit";
    if (std::filesystem::exists(audit_path)) {
        restore_text(text, read_file(audit_path));
    } else {
        restore_text(text);
    }
}

void Store::restore_text(std::string_view snapshot, std::optional<std::string_view> audit_jsonl) {
    if (snapshot.empty() || snapshot.back() != '\n') throw Error(Errc::CorruptSnapshot, "missing final newline");
    auto header_end = snapshot.find('\n');
    if (snapshot.substr(0, header_end) != kSnapshotHeader) throw Error(Errc::CorruptSnapshot, "bad header");

    std::vector<FhirResource> bundle;
    std::size_t line_no = 1;
    std::size_t pos = header_end + 1;
    while (pos < snapshot.size()) {
        auto end = snapshot.find('\n', pos);
        ++line_no;
        try {
            bundle.push_back(fhir::parse_resource(snapshot.substr(pos, end - pos)));
        } catch (const Error& e) {
            throw Error(Errc::CorruptSnapshot, "line " + std::to_string(line_no) + ": " + e.what());
        }
        pos = end + 1;
    }
    // Patients and Encounters first so references resolve in one pass.
    std::stable_sort(bundle.begin(), bundle.end(), [](const FhirResource& a, const FhirResource& b) {
        auto rank = [](ResourceType t) { return t == ResourceType::Patient ? 0 : t == ResourceType::Encounter ? 1 : 2; };
        return rank(a.type()) < rank(b.type());
    });

    std::vector<AuditRecord> audit;
    if (audit_jsonl) audit = parse_audit(*audit_jsonl);

    Store fresh(clock_);
    try {
        fresh.ingest_bundle(bundle, {"restore", std::nullopt, std::nullopt});
    } catch (const Error& e) {
        throw Error(Errc::CorruptSnapshot, e.what());
    }
    if (audit_jsonl) {
        std::set<Key> logged;
        for (const auto& rec : audit) logged.insert(Key{rec.resource.type(), rec.resource.id()});
        if (logged.size() != fresh.resources_.size()) {
            throw Error(Errc::CorruptSnapshot, "audit sidecar does not match snapshot contents");
        }
        for (const auto& [key, r] : fresh.resources_) {
            if (!logged.count(key)) throw Error(Errc::CorruptSnapshot, "audit sidecar does not match snapshot");
        }
        fresh.audit_ = std::move(audit);
    }

    std::unique_lock lock(mutex_);
    resources_ = std::move(fresh.resources_);
    by_patient_ = std::move(fresh.by_patient_);
    audit_ = std::move(fresh.audit_);
}

void Store::replay(const std::vector<AuditRecord>& log) {
    std::unique_lock lock(mutex_);
    if (!resources_.empty()) throw Error(Errc::InvalidArgument, "replay requires an empty store");
    for (const auto& rec : log) {
        fhir::ensure_valid(rec.resource);
        Key key{rec.resource.type(), rec.resource.id()};
        if (resources_.count(key)) throw Error(Errc::DuplicateId, rec.resource.resource_id().reference());
        check_references_locked(rec.resource, {});
        insert_locked(rec.resource);
        audit_.push_back(rec);
        audit_.back().seq = audit_.size();
    }
}

}  // namespace almanac::store

#pragma once

#include "almanac/common/clock.hpp"
#include "almanac/exec/runtime.hpp"
#include "almanac/script/script.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::exec {

enum class ActionStatus { Pending, Approved, Rejected, Executed, Failed };

std::string_view to_string(ActionStatus status) noexcept;
std::optional<ActionStatus> action_status_from_string(std::string_view text) noexcept;

struct StepError {
    std::string code;
    std::string message;

    bool operator==(const StepError&) const = default;
};

struct StepOutcome {
    enum class Status { Ok, SkippedGuard, Error };

    std::string step_id;
    Status status = Status::Ok;
    std::optional<json> value;
    std::optional<StepError> error;
    /// True when a mutating step was only simulated (dry run).
    bool preview = false;

    bool operator==(const StepOutcome&) const = default;
};

std::string_view to_string(StepOutcome::Status status) noexcept;

struct ExecutionResult {
    std::vector<StepOutcome> steps;
    std::optional<std::string> aborted_at;

    bool ok() const noexcept { return !aborted_at; }
    json to_json() const;
    static ExecutionResult from_json(const json& j);
    bool operator==(const ExecutionResult&) const = default;
};

struct PendingAction {
    std::string action_id;
    std::string session_id;
    script::Script script;
    fhir::DateTime created_at;
    ActionStatus status = ActionStatus::Pending;
    std::optional<std::string> decision_by;
    std::optional<fhir::DateTime> decided_at;
    std::optional<fhir::DateTime> finished_at;
    std::optional<ExecutionResult> results;

    json to_json() const;
    /// Throws MalformedRecord.
    static PendingAction from_json(const json& j);
};

/**
 * @brief Approval queue and step interpreter.
 *
 * Nothing runs at submit time. approve() moves pending to approved by
 * compare-and-set, runs the steps under a single execution lock, then
 * records executed or failed. With a persistence path every transition is
 * appended to that JSON Lines file as the full action record.
 */
class Executor {
public:
    Executor(ToolRuntime& runtime, Clock clock = system_clock(),
             std::optional<std::filesystem::path> actions_path = std::nullopt);

    /// Throws InvalidScript when resolve_and_typecheck reports violations.
    std::string submit(const std::string& session_id, const script::Script& script);
    /// Throws NotFound or WrongState. Step failures are recorded, not thrown.
    ExecutionResult approve(const std::string& action_id, const std::string& actor);
    /// Throws NotFound or WrongState.
    void reject(const std::string& action_id, const std::string& actor);
    /// Runs read-only steps for real and previews mutating ones. Never writes.
    ExecutionResult dry_run(const script::Script& script) const;

    PendingAction get(const std::string& action_id) const;
    std::vector<PendingAction> list(std::optional<std::string> session_id = std::nullopt,
                                    std::optional<ActionStatus> status = std::nullopt) const;

    /// Reads a `.actions` file; the last record per action id wins.
    static std::vector<PendingAction> load_actions(const std::filesystem::path& path);
    /// Replaces in-memory actions (for restart). Continues id numbering after them.
    void restore_actions(const std::vector<PendingAction>& actions);

private:
    ExecutionResult run(const script::Script& script, const std::string& action_id, const std::string& actor,
                        bool preview) const;
    bool transition(const std::string& action_id, ActionStatus from, ActionStatus to,
                    const std::function<void(PendingAction&)>& update);
    void persist_locked(const PendingAction& action) const;

    ToolRuntime& runtime_;
    Clock clock_;
    std::optional<std::filesystem::path> actions_path_;
    mutable std::mutex mutex_;
    std::mutex execution_mutex_;
    std::map<std::string, PendingAction> actions_;
    std::uint64_t next_seq_ = 1;
};

/// Resolves `ref` against the outcomes so far. Throws StepFailure.
json resolve_ref(const tools::Ref& ref, const std::vector<StepOutcome>& outcomes);

/// Evaluates a guard on resolved values. Throws StepFailure(GUARD_KIND_MISMATCH).
bool guard_holds(const json& lhs, script::CompareOp op, const json& rhs);

}  // namespace almanac::exec

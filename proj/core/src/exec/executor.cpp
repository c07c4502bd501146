#include "almanac/exec/executor.hpp"

#include "almanac/common/error.hpp"
#include "almanac/common/text.hpp"
#include "almanac/tools/call.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace almanac::exec {

using fhir::DateTime;
using script::Script;
using tools::ParamKind;

std::string_view to_string(ActionStatus status) noexcept {
    switch (status) {
        case ActionStatus::Pending: return "pending";
        case ActionStatus::Approved: return "approved";
        case ActionStatus::Rejected: return "rejected";
        case ActionStatus::Executed: return "executed";
        case ActionStatus::Failed: return "failed";
    }
    return "pending";
}

std::optional<ActionStatus> action_status_from_string(std::string_view text) noexcept {
    for (auto s : {ActionStatus::Pending, ActionStatus::Approved, ActionStatus::Rejected, ActionStatus::Executed,
                   ActionStatus::Failed}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

std::string_view to_string(StepOutcome::Status status) noexcept {
    switch (status) {
        case StepOutcome::Status::Ok: return "ok";
        case StepOutcome::Status::SkippedGuard: return "skipped_guard";
        case StepOutcome::Status::Error: return "error";
    }
    return "ok";
}

// =============================================================================
// Records
// =============================================================================

json ExecutionResult::to_json() const {
    json steps_json = json::array();
    for (const auto& s : steps) {
        json j{{"step_id", s.step_id}, {"status", exec::to_string(s.status)}};
        if (s.value) j["value"] = *s.value;
        if (s.error) j["error"] = {{"code", s.error->code}, {"message", s.error->message}};
        if (s.preview) j["preview"] = true;
        steps_json.push_back(std::move(j));
    }
    return {{"steps", steps_json}, {"aborted_at", aborted_at ? json(*aborted_at) : json(nullptr)}};
}

ExecutionResult ExecutionResult::from_json(const json& j) {
    try {
        ExecutionResult r;
        for (const auto& s : j.at("steps")) {
            StepOutcome o;
            o.step_id = s.at("step_id").get<std::string>();
            const auto status = s.at("status").get<std::string>();
            if (status == "ok") {
                o.status = StepOutcome::Status::Ok;
            } else if (status == "skipped_guard") {
                o.status = StepOutcome::Status::SkippedGuard;
            } else if (status == "error") {
                o.status = StepOutcome::Status::Error;
            } else {
                throw Error(Errc::MalformedRecord, "step status '" + status + "'");
            }
            if (s.contains("value")) o.value = s.at("value");
            if (s.contains("error")) {
                o.error = StepError{s.at("error").at("code").get<std::string>(), s.at("error").at("message").get<std::string>()};
            }
            o.preview = s.value("preview", false);
            r.steps.push_back(std::move(o));
        }
        if (!j.at("aborted_at").is_null()) r.aborted_at = j.at("aborted_at").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, std::string("execution result: ") + e.what());
    }
}

json PendingAction::to_json() const {
    json j{{"action_id", action_id},
           {"session_id", session_id},
           {"script", script::script_to_json(script)},
           {"created_at", created_at.to_string()},
           {"status", exec::to_string(status)}};
    if (decision_by) j["decision_by"] = *decision_by;
    if (decided_at) j["decided_at"] = decided_at->to_string();
    if (finished_at) j["finished_at"] = finished_at->to_string();
    if (results) j["results"] = results->to_json();
    return j;
}

PendingAction PendingAction::from_json(const json& j) {
    auto time = [](const json& v, const char* what) {
        auto t = DateTime::parse(v.get<std::string>());
        if (!t) throw Error(Errc::MalformedRecord, std::string(what) + " is not a timestamp");
        return *t;
    };
    try {
        PendingAction a;
        a.action_id = j.at("action_id").get<std::string>();
        a.session_id = j.at("session_id").get<std::string>();
        a.script = script::parse_script(j.at("script").dump());
        a.created_at = time(j.at("created_at"), "created_at");
        auto status = action_status_from_string(j.at("status").get<std::string>());
        if (!status) throw Error(Errc::MalformedRecord, "unknown action status");
        a.status = *status;
        if (j.contains("decision_by")) a.decision_by = j.at("decision_by").get<std::string>();
        if (j.contains("decided_at")) a.decided_at = time(j.at("decided_at"), "decided_at");
        if (j.contains("finished_at")) a.finished_at = time(j.at("finished_at"), "finished_at");
        if (j.contains("results")) a.results = ExecutionResult::from_json(j.at("results"));
        return a;
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, std::string("action record: ") + e.what());
    } catch (const SyntaxError& e) {
        throw Error(Errc::MalformedRecord, std::string("action script: ") + e.what());
    }
}

// =============================================================================
// Interpretation
// =============================================================================

json resolve_ref(const tools::Ref& ref, const std::vector<StepOutcome>& outcomes) {
    auto it = std::find_if(outcomes.begin(), outcomes.end(), [&](const auto& o) { return o.step_id == ref.step_id; });
    if (it == outcomes.end()) throw StepFailure(runtime_code::kValueInvalid, "step " + ref.step_id + " has not run");
    if (it->status == StepOutcome::Status::SkippedGuard) {
        throw StepFailure(runtime_code::kSkippedReference, "step " + ref.step_id + " was skipped by its guard");
    }
    if (!it->value) throw StepFailure(runtime_code::kValueInvalid, "step " + ref.step_id + " produced no value");
    const json* cur = &*it->value;
    std::string where = "$" + ref.step_id + ".result";
    for (const auto& seg : ref.path) {
        if (const auto* name = std::get_if<std::string>(&seg)) {
            if (!cur->is_object()) throw StepFailure(runtime_code::kKindMismatch, where + " is not an object");
            auto f = cur->find(*name);
            if (f == cur->end()) throw StepFailure(runtime_code::kMissingField, where + " has no field '" + *name + "'");
            cur = &*f;
            where += "." + *name;
        } else {
            const auto index = std::get<std::size_t>(seg);
            if (!cur->is_array()) throw StepFailure(runtime_code::kKindMismatch, where + " is not a list");
            if (index >= cur->size()) {
                throw StepFailure(runtime_code::kIndexOutOfRange,
                                  where + " has " + std::to_string(cur->size()) + " element(s), index " + std::to_string(index));
            }
            cur = &(*cur)[index];
            where += "[" + std::to_string(index) + "]";
        }
    }
    return *cur;
}

bool guard_holds(const json& lhs, script::CompareOp op, const json& rhs) {
    int cmp = 0;
    if (lhs.is_number() && rhs.is_number()) {
        const double a = lhs.get<double>(), b = rhs.get<double>();
        cmp = a < b ? -1 : (a > b ? 1 : 0);
    } else if (lhs.is_string() && rhs.is_string()) {
        const int c = lhs.get_ref<const std::string&>().compare(rhs.get_ref<const std::string&>());
        cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
    } else {
        throw StepFailure(runtime_code::kGuardKindMismatch, "cannot compare " + lhs.dump() + " with " + rhs.dump());
    }
    switch (op) {
        case script::CompareOp::Lt: return cmp < 0;
        case script::CompareOp::Le: return cmp <= 0;
        case script::CompareOp::Gt: return cmp > 0;
        case script::CompareOp::Ge: return cmp >= 0;
        case script::CompareOp::Eq: return cmp == 0;
        case script::CompareOp::Ne: return cmp != 0;
    }
    return false;
}

namespace {

bool json_kind_fits(ParamKind kind, const json& v) {
    switch (kind) {
        case ParamKind::Number: return v.is_number();
        case ParamKind::Boolean: return v.is_boolean();
        default: return v.is_string();
    }
}

}  // namespace

Executor::Executor(ToolRuntime& runtime, Clock clock, std::optional<std::filesystem::path> actions_path)
    : runtime_(runtime), clock_(std::move(clock)), actions_path_(std::move(actions_path)) {}

ExecutionResult Executor::run(const Script& script, const std::string& action_id, const std::string& actor,
                              bool preview) const {
    ExecutionResult result;
    const auto& registry = runtime_.registry();
    for (const auto& step : script.steps) {
        StepOutcome outcome;
        outcome.step_id = step.id;
        try {
            if (step.guard) {
                const auto& g = *step.guard;
                const json lhs = g.lhs.ref() ? resolve_ref(*g.lhs.ref(), result.steps) : *g.lhs.literal();
                if (!guard_holds(lhs, g.op, g.rhs)) {
                    outcome.status = StepOutcome::Status::SkippedGuard;
                    result.steps.push_back(std::move(outcome));
                    continue;
                }
            }
            const tools::ToolSchema* schema = registry.find(step.call.function);
            if (!schema) throw StepFailure(runtime_code::kToolError, "no function named " + step.call.function);

            Arguments args;
            tools::ToolCall resolved{step.call.function, {}};
            for (const auto& [name, value] : step.call.args) {
                json v = value.ref() ? resolve_ref(*value.ref(), result.steps) : *value.literal();
                const tools::ParamSpec* p = schema->param(name);
                if (value.ref() && p && !json_kind_fits(p->kind, v)) {
                    throw StepFailure(runtime_code::kKindMismatch,
                                      name + " needs a " + std::string(tools::to_string(p->kind)) + ", got " + v.dump());
                }
                resolved.args.emplace(name, tools::ArgValue{v});
                args.emplace(name, std::move(v));
            }
            store::Store& store = runtime_.store();
            auto check = tools::validate_call(registry, resolved, [&](const fhir::ResourceId& id) { return store.contains(id); });
            if (!check.ok()) {
                const auto& v = check.violations.front();
                throw StepFailure(runtime_code::kValueInvalid, v.param + ": " + v.message);
            }
            store::WriteContext ctx{actor, action_id, step.id};
            outcome.preview = preview && schema->mutating;
            outcome.value = runtime_.invoke(step.call.function, args, ctx, outcome.preview);
        } catch (const StepFailure& f) {
            outcome.status = StepOutcome::Status::Error;
            outcome.error = StepError{f.code(), f.what()};
            outcome.preview = false;
            result.aborted_at = step.id;
            result.steps.push_back(std::move(outcome));
            break;
        }
        result.steps.push_back(std::move(outcome));
    }
    return result;
}

std::string Executor::submit(const std::string& session_id, const Script& script) {
    store::Store& store = runtime_.store();
    auto validation = script::resolve_and_typecheck(script, runtime_.registry(),
                                                    [&](const fhir::ResourceId& id) { return store.contains(id); });
    if (!validation.ok()) {
        std::string detail;
        for (const auto& v : validation.violations) {
            if (!detail.empty()) detail += "; ";
            detail += v.step_id + ": " + v.code + (v.param.empty() ? "" : " (" + v.param + ")");
        }
        throw Error(Errc::InvalidScript, detail);
    }
    std::lock_guard lock(mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "act-%06llu", static_cast<unsigned long long>(next_seq_++));
    PendingAction a;
    a.action_id = buf;
    a.session_id = session_id;
    a.script = script;
    a.created_at = clock_();
    actions_.emplace(a.action_id, a);
    persist_locked(a);
    return a.action_id;
}

bool Executor::transition(const std::string& action_id, ActionStatus from, ActionStatus to,
                          const std::function<void(PendingAction&)>& update) {
    std::lock_guard lock(mutex_);
    auto it = actions_.find(action_id);
    if (it == actions_.end()) throw Error(Errc::NotFound, "action " + action_id);
    if (it->second.status != from) return false;
    it->second.status = to;
    update(it->second);
    persist_locked(it->second);
    return true;
}

ExecutionResult Executor::approve(const std::string& action_id, const std::string& actor) {
    Script script;
    const bool won = transition(action_id, ActionStatus::Pending, ActionStatus::Approved, [&](PendingAction& a) {
        a.decision_by = actor;
        a.decided_at = std::max(clock_(), a.created_at);
        script = a.script;
    });
    if (!won) {
        throw Error(Errc::WrongState, "action " + action_id + " is " + std::string(to_string(get(action_id).status)));
    }
    ExecutionResult result;
    {
        std::lock_guard exec_lock(execution_mutex_);
        result = run(script, action_id, actor, false);
    }
    transition(action_id, ActionStatus::Approved, result.ok() ? ActionStatus::Executed : ActionStatus::Failed,
               [&](PendingAction& a) {
                   a.finished_at = std::max(clock_(), *a.decided_at);
                   a.results = result;
               });
    return result;
}

void Executor::reject(const std::string& action_id, const std::string& actor) {
    const bool won = transition(action_id, ActionStatus::Pending, ActionStatus::Rejected, [&](PendingAction& a) {
        a.decision_by = actor;
        a.decided_at = std::max(clock_(), a.created_at);
    });
    if (!won) {
        throw Error(Errc::WrongState, "action " + action_id + " is " + std::string(to_string(get(action_id).status)));
    }
}

ExecutionResult Executor::dry_run(const Script& script) const {
    return run(script, "dry-run", "dry-run", true);
}

PendingAction Executor::get(const std::string& action_id) const {
    std::lock_guard lock(mutex_);
    auto it = actions_.find(action_id);
    if (it == actions_.end()) throw Error(Errc::NotFound, "action " + action_id);
    return it->second;
}

std::vector<PendingAction> Executor::list(std::optional<std::string> session_id, std::optional<ActionStatus> status) const {
    std::lock_guard lock(mutex_);
    std::vector<PendingAction> out;
    for (const auto& [id, a] : actions_) {
        if (session_id && a.session_id != *session_id) continue;
        if (status && a.status != *status) continue;
        out.push_back(a);
    }
    return out;
}

void Executor::persist_locked(const PendingAction& action) const {
    if (!actions_path_) return;
    std::ofstream out(*actions_path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot append to " + actions_path_->string());
    out << action.to_json().dump() << '\n';
}

std::vector<PendingAction> Executor::load_actions(const std::filesystem::path& path) {
    std::map<std::string, PendingAction> latest;
    if (!std::filesystem::exists(path)) return {};
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, std::string("action line: ") + e.what());
        }
        auto a = PendingAction::from_json(j);
        std::string id = a.action_id;
        latest.insert_or_assign(std::move(id), std::move(a));
    }
    std::vector<PendingAction> out;
    for (auto& [id, a] : latest) out.push_back(std::move(a));
    return out;
}

void Executor::restore_actions(const std::vector<PendingAction>& actions) {
    std::lock_guard lock(mutex_);
    actions_.clear();
    next_seq_ = 1;
    for (const auto& a : actions) {
        actions_.insert_or_assign(a.action_id, a);
        unsigned long long n = 0;
        if (std::sscanf(a.action_id.c_str(), "act-%llu", &n) == 1) next_seq_ = std::max<std::uint64_t>(next_seq_, n + 1);
    }
}

}  // namespace almanac::exec

#pragma once

#include "almanac/tools/call.hpp"
#include "almanac/tools/registry.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace almanac::script {

using tools::ArgValue;
using tools::PathSegment;
using tools::Ref;
using tools::ToolCall;

enum class CompareOp { Lt, Le, Gt, Ge, Eq, Ne };

std::string_view to_string(CompareOp op) noexcept;
std::optional<CompareOp> compare_op_from_string(std::string_view text) noexcept;

/// `when` clause: the step runs only if `lhs op rhs` holds.
struct Guard {
    ArgValue lhs;
    CompareOp op = CompareOp::Eq;
    nlohmann::json rhs;  ///< number or string literal

    bool operator==(const Guard&) const = default;
};

struct Step {
    std::string id;
    ToolCall call;
    std::optional<Guard> guard;

    bool operator==(const Step&) const = default;
};

struct Script {
    std::vector<Step> steps;

    const Step* find(std::string_view id) const noexcept;
    bool operator==(const Script&) const = default;
};

/// Step ids: `[A-Za-z_][A-Za-z0-9_-]*`.
bool is_step_id(std::string_view text) noexcept;

/**
 * @brief Parses the JSON script wire format.
 *
 * Throws SyntaxError (with the position of the offending token) for malformed
 * JSON, unknown members, non-scalar literals, bad reference strings, and
 * references that do not point at an earlier step. Throws Error(DuplicateStepId).
 */
Script parse_script(std::string_view text);

/// Parses a `$step.result...` string. Returns nullopt when it is not one.
std::optional<Ref> parse_ref(std::string_view text);

/// Canonical compact JSON; parse_script(print_script(s)) == s.
std::string print_script(const Script& script);
nlohmann::json script_to_json(const Script& script);

/// (from, to) pairs: step `from` references the result of step `to`.
std::vector<std::pair<std::string, std::string>> reference_edges(const Script& script);

// =============================================================================
// Static checking
// =============================================================================

enum class ValueKind { String, Number, Boolean, Date, Object, Array };

std::string_view to_string(ValueKind kind) noexcept;

/// Static type of a Ref target.
struct RefType {
    ValueKind kind = ValueKind::String;
    /// Set when the value is known to identify a resource of this type
    /// (a resource's `id`, or a `subject`/`encounter` reference string).
    std::optional<fhir::ResourceType> identifies;
};

struct ScriptViolation {
    std::string step_id;
    std::string code;   ///< e.g. TYPE_MISMATCH, UNKNOWN_STEP, GUARD_KIND_MISMATCH
    std::string param;  ///< argument name, "when" for guards, empty otherwise
    std::string message;

    bool operator==(const ScriptViolation&) const = default;
};

struct ScriptValidation {
    std::vector<ScriptViolation> violations;
    /// Informational markers that do not make the script invalid, e.g. EMPTY.
    std::vector<std::string> flags;

    bool ok() const noexcept { return violations.empty(); }
    bool flagged(std::string_view flag) const noexcept;
    bool has(std::string_view code) const noexcept;
};

/// Types `ref` against the return descriptor of the step it names.
/// Returns nullopt (with `why` filled) when the path cannot be typed.
std::optional<RefType> type_ref(const Script& script, const tools::Registry& registry, std::size_t from_step,
                                const Ref& ref, std::string* why = nullptr);

/**
 * @brief Validates every call, reference and guard.
 *
 * Per step, in order: call violations from validate_call (literal arguments),
 * then reference typing for each Ref argument in name order, then the guard.
 */
ScriptValidation resolve_and_typecheck(const Script& script, const tools::Registry& registry,
                                       const tools::RefResolver& resolver = {});

}  // namespace almanac::script

#pragma once

#include "almanac/fhir/model.hpp"
#include "almanac/tools/registry.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace almanac::tools {

/// One path step below a step's `result`: a member name or an array index.
using PathSegment = std::variant<std::string, std::size_t>;

/// Reference to (part of) an earlier step's return value: `$<step>.result<path>`.
struct Ref {
    std::string step_id;
    std::vector<PathSegment> path;

    std::string to_string() const;
    bool operator==(const Ref&) const = default;
};

/// Literal JSON scalar (string, number or boolean) or a Ref.
struct ArgValue {
    std::variant<nlohmann::json, Ref> value;

    ArgValue() = default;
    ArgValue(nlohmann::json literal) : value(std::in_place_index<0>, std::move(literal)) {}  // NOLINT
    ArgValue(Ref ref) : value(std::in_place_index<1>, std::move(ref)) {}                       // NOLINT

    bool is_ref() const noexcept { return std::holds_alternative<Ref>(value); }
    const Ref* ref() const noexcept { return std::get_if<Ref>(&value); }
    const nlohmann::json* literal() const noexcept { return std::get_if<nlohmann::json>(&value); }

    bool operator==(const ArgValue&) const = default;
};

struct ToolCall {
    std::string function;
    std::map<std::string, ArgValue> args;

    bool operator==(const ToolCall&) const = default;
};

enum class ViolationCode {
    FabricatedTool,
    MissingRequired,
    TypeMismatch,
    EnumViolation,
    IdDateConfound,
    DanglingRef,
    UnknownParam,
};

/// Upper snake case, e.g. `FABRICATED_TOOL`.
std::string_view to_string(ViolationCode code) noexcept;

struct CallViolation {
    ViolationCode code;
    std::string param;  ///< empty for FABRICATED_TOOL
    std::string message;

    bool operator==(const CallViolation&) const = default;
};

struct CallValidation {
    std::vector<CallViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
    bool has(ViolationCode code) const noexcept;
};

/// Reports whether a referenced resource exists. Enables DANGLING_REF checks.
using RefResolver = std::function<bool(const fhir::ResourceId&)>;

/**
 * @brief Checks a call against its schema.
 *
 * Violations are ordered: FABRICATED_TOOL alone, else one entry per schema
 * parameter in schema order, then UNKNOWN_PARAM for extra arguments sorted
 * by name. Ref arguments are left to the script typechecker.
 */
CallValidation validate_call(const Registry& registry, const ToolCall& call, const RefResolver& resolver = {});

/// Parses a resource_ref literal (`id` or `Type/id`) against the expected type.
/// Returns nullopt when the value is not a well-formed reference of that type.
std::optional<fhir::ResourceId> parse_ref_literal(std::string_view text, fhir::ResourceType expected);

}  // namespace almanac::tools

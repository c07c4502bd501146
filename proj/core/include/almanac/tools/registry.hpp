#pragma once

#include "almanac/fhir/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::tools {

enum class ParamKind { String, Number, Boolean, Date, Enum, ResourceRef };

std::string_view to_string(ParamKind kind) noexcept;
std::optional<ParamKind> param_kind_from_string(std::string_view text) noexcept;

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::String;
    std::vector<std::string> values;                 ///< Enum only
    std::optional<fhir::ResourceType> resource_type; ///< ResourceRef only
    bool required = false;
    std::string description;

    bool operator==(const ParamSpec&) const = default;
};

enum class ReturnKind { String, Resource, ResourceList, Number };

std::string_view to_string(ReturnKind kind) noexcept;
std::optional<ReturnKind> return_kind_from_string(std::string_view text) noexcept;

struct ReturnSpec {
    ReturnKind kind = ReturnKind::String;
    /// Resource and ResourceList: the possible element types (a union when more than one).
    std::vector<fhir::ResourceType> resource_types;
    std::string description;

    bool operator==(const ReturnSpec&) const = default;
};

struct ToolSchema {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    ReturnSpec returns;
    bool mutating = false;  ///< writes to the record when executed

    const ParamSpec* param(std::string_view param_name) const noexcept;
    bool operator==(const ToolSchema&) const = default;
};

/// Immutable, ordered set of tool schemas with unique names.
class Registry {
public:
    Registry() = default;
    /// Throws MalformedSchema when an invariant is broken.
    explicit Registry(std::vector<ToolSchema> schemas);

    const ToolSchema* find(std::string_view name) const noexcept;
    const std::vector<ToolSchema>& schemas() const noexcept { return schemas_; }
    std::size_t size() const noexcept { return schemas_.size(); }

    bool operator==(const Registry&) const = default;

private:
    std::vector<ToolSchema> schemas_;
};

/// The nine functions the copilot may call.
const Registry& builtin_registry();

inline constexpr int kSchemaVersion = 1;

/// `{"schema_version":1,"tools":[...]}`.
nlohmann::json registry_to_json(const Registry& registry);
/// Throws MalformedSchema.
Registry registry_from_json(const nlohmann::json& document);
Registry load_registry(const std::filesystem::path& path);
void save_registry(const Registry& registry, const std::filesystem::path& path);

/// Deterministic text block describing every function, for planner prompts.
std::string render_for_prompt(const Registry& registry);
/// Inverse of render_for_prompt. Throws MalformedSchema.
Registry parse_prompt_rendering(std::string_view text);

}  // namespace almanac::tools

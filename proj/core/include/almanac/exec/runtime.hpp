#pragma once

#include "almanac/knowledge/calculator.hpp"
#include "almanac/knowledge/literature.hpp"
#include "almanac/store/store.hpp"
#include "almanac/tools/registry.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace almanac::exec {

using nlohmann::json;

/// Step-level failure codes recorded in execution results.
namespace runtime_code {
inline constexpr const char* kSkippedReference = "SKIPPED_REFERENCE";
inline constexpr const char* kMissingField = "MISSING_FIELD";
inline constexpr const char* kIndexOutOfRange = "INDEX_OUT_OF_RANGE";
inline constexpr const char* kKindMismatch = "KIND_MISMATCH";
inline constexpr const char* kGuardKindMismatch = "GUARD_KIND_MISMATCH";
inline constexpr const char* kValueInvalid = "VALUE_INVALID";
inline constexpr const char* kToolError = "TOOL_ERROR";
}  // namespace runtime_code

class StepFailure : public std::runtime_error {
public:
    StepFailure(std::string code, std::string message);
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Resolved arguments: every Ref already replaced by its JSON value.
using Arguments = std::map<std::string, json>;

/**
 * @brief Dispatches registry functions to the store and knowledge tools.
 *
 * Database searches return the patient's matching resources newest first.
 * A free-text `query` keeps resources whose text fields contain the whole
 * phrase (ranked first) or any of its tokens; an empty query keeps all.
 */
class ToolRuntime {
public:
    ToolRuntime(store::Store& store, const tools::Registry& registry,
                std::shared_ptr<const knowledge::LiteratureTool> literature = nullptr,
                std::shared_ptr<const knowledge::CalculatorLibrary> calculators = nullptr);

    /**
     * Runs `function`. Mutating tools write through `ctx`; with `preview` set
     * they build and check the resource but return it with id
     * `preview-<step_id>` instead of storing it. Throws StepFailure.
     */
    json invoke(const std::string& function, const Arguments& args, const store::WriteContext& ctx,
                bool preview = false);

    const tools::Registry& registry() const noexcept { return registry_; }
    store::Store& store() noexcept { return store_; }

private:
    fhir::FhirResource build_order(const std::string& function, const Arguments& args) const;
    json search(const std::string& function, const Arguments& args) const;

    store::Store& store_;
    const tools::Registry& registry_;
    std::shared_ptr<const knowledge::LiteratureTool> literature_;
    std::shared_ptr<const knowledge::CalculatorLibrary> calculators_;
};

}  // namespace almanac::exec

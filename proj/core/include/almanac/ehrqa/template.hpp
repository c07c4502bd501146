#pragma once

#include "almanac/common/error.hpp"
#include "almanac/script/script.hpp"
#include "almanac/tools/registry.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace almanac::ehrqa {

using nlohmann::json;

enum class Category { InformationRetrieval, DataEntry };

std::string_view to_string(Category c) noexcept;

/// How a gold parameter value is compared with a response argument.
enum class Matcher {
    Exact,            ///< byte equality; resource ids compared without a `Type/` prefix
    Date,             ///< ISO dates compared by calendar day (or instant when both carry a time)
    CaseInsensitive,  ///< ASCII case-insensitive equality after trimming
    Numeric,          ///< relative tolerance 1e-6
    Contains,         ///< response contains the value, case-insensitively
    Any,              ///< unconstrained, may be absent
};

std::string_view to_string(Matcher m) noexcept;
std::optional<Matcher> matcher_from_string(std::string_view text) noexcept;

/// Slot filled from one field of a history row, or from a fixed choice list.
struct SlotSpec {
    std::string name;
    std::string kind;  ///< the `<name:kind>` kind
    std::string source;
    std::string field;
    std::vector<std::string> choices;

    bool is_choice() const noexcept { return !choices.empty(); }
};

struct ArgSpec {
    enum class Kind { Slot, Value, Format };
    Kind kind = Kind::Value;
    std::string slot;    ///< Slot
    json value;          ///< Value
    std::string format;  ///< Format: text with `{slot}` placeholders
    /// Format only: the expected value the matcher checks instead of the full text.
    std::optional<std::string> check;
    Matcher match = Matcher::Exact;
};

struct GuardSpec {
    std::string lhs;  ///< reference text, e.g. `$step1.result[0].valueQuantity.value`
    std::optional<std::string> op;
    std::string op_slot;
    std::map<std::string, std::string> op_map;  ///< slot value -> operator
    std::optional<json> rhs;
    std::string rhs_slot;
    bool rhs_number = false;
};

struct CallSpec {
    std::string function;
    std::map<std::string, ArgSpec> args;
    std::optional<GuardSpec> when;
};

struct QuestionTemplate {
    std::string id;
    Category category = Category::InformationRetrieval;
    std::string text;
    std::vector<SlotSpec> slots;
    std::vector<std::string> required_fields;  ///< `source.field` that must have a row
    std::vector<CallSpec> calls;
    std::size_t line = 0;  ///< source line of the template object

    const SlotSpec* slot(std::string_view name) const noexcept;
};

/// Slot name -> bound value. `patient` always holds the patient id.
using Bindings = std::map<std::string, std::string>;

/// MalformedTemplate carrying the 1-based line of the offending element.
class TemplateError : public Error {
public:
    TemplateError(std::size_t line, const std::string& detail);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Slot kinds accepted in `<name:kind>` placeholders.
const std::vector<std::string>& slot_kinds();
/// History sources and their fields, e.g. `lab` -> {name, date, value, unit}.
const std::map<std::string, std::vector<std::string>>& slot_sources();

/// Parses a JSON template array. Throws TemplateError.
std::vector<QuestionTemplate> parse_templates(std::string_view text,
                                              const tools::Registry& registry = tools::builtin_registry());

/**
 * Reads a template file. With `require_full_bank` the file must hold the
 * 40-question bank: 29 information retrieval and 11 data entry templates.
 */
std::vector<QuestionTemplate> load_templates(const std::filesystem::path& path,
                                             const tools::Registry& registry = tools::builtin_registry(),
                                             bool require_full_bank = true);

const QuestionTemplate* find_template(const std::vector<QuestionTemplate>& bank, std::string_view id) noexcept;

/// Placeholders `<name:kind>` in order of appearance.
std::vector<std::pair<std::string, std::string>> text_slots(std::string_view text);

/// How a bound value reads inside a question; patients read as `patient <id>`.
std::string render_slot(const std::string& kind, const std::string& value);
std::string render_question(const QuestionTemplate& t, const Bindings& bindings);

/// The template's calls with bindings substituted. Steps are `step1`, `step2`, ...
script::Script instantiate_calls(const QuestionTemplate& t, const Bindings& bindings);

}  // namespace almanac::ehrqa

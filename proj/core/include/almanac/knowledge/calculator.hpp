#pragma once

#include "almanac/knowledge/expr.hpp"
#include "almanac/knowledge/index.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace almanac::knowledge {

struct CalcInput {
    enum class Kind { Number, Enum };

    std::string name;
    Kind kind = Kind::Number;
    std::optional<double> min;  ///< inclusive
    std::optional<double> max;  ///< inclusive
    std::map<std::string, double, std::less<>> values;  ///< Enum: label -> numeric value
    std::string unit;
    std::string description;
};

/// Interpretation band: low <= value < high (open ends when unset).
struct Band {
    std::optional<double> low;
    std::optional<double> high;
    std::string label;

    bool contains(double value) const noexcept;
};

struct CalculatorDef {
    std::string id;
    std::string name;
    std::string description;
    std::vector<CalcInput> inputs;
    std::string expression_text;
    ExprPtr expression;
    std::vector<Band> bands;

    const CalcInput* input(std::string_view name) const noexcept;
};

/**
 * @brief Parses a calculator markdown file.
 *
 * YAML front matter between `---` lines carries id, name, inputs and bands;
 * the body must contain exactly one fenced ```expression block. Throws
 * MalformedSchema when the file is malformed, the expression uses undeclared
 * names, or it fails to evaluate at the corners and midpoints of the ranges.
 */
CalculatorDef parse_calculator(std::string_view markdown);

using CalcArg = std::variant<double, std::string>;
using CalcArgs = std::map<std::string, CalcArg, std::less<>>;

struct CalcResult {
    double value = 0;
    std::optional<std::string> band;
};

/// Parses "weight=70, height=1.75, sex=female". Numbers become doubles.
/// Throws InvalidArgument for entries without '=' or with repeated names.
CalcArgs parse_calculator_inputs(std::string_view text);

/// Throws InputOutOfRange (missing, out-of-range, wrong kind or unknown label),
/// InvalidArgument (undeclared input) or EvaluationError.
CalcResult evaluate_calculator(const CalculatorDef& def, const CalcArgs& args);

class CalculatorLibrary {
public:
    /// Throws DuplicateId.
    void add(CalculatorDef def, std::string markdown = {});
    /// Loads every `*.md` file. Returns the number loaded.
    std::size_t load_dir(const std::filesystem::path& dir);

    const CalculatorDef* find(std::string_view id) const noexcept;
    std::vector<std::string> ids() const;
    /// Throws UnknownCalculator, then as evaluate_calculator.
    CalcResult evaluate(std::string_view id, const CalcArgs& args) const;

    /// Calculator pages as searchable documents.
    std::vector<Document> documents() const;

private:
    std::map<std::string, std::pair<CalculatorDef, std::string>, std::less<>> defs_;
};

}  // namespace almanac::knowledge

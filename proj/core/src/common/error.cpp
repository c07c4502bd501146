#include "almanac/common/error.hpp"

#include <array>

namespace almanac {

namespace {

constexpr std::array<std::string_view, 29> kErrcNames = {
    "MalformedJson",      "UnknownResourceType", "InvariantViolation",
    "DanglingReference",  "DuplicateId",         "NotFound",
    "UnknownField",       "InvalidQuery",        "CorruptSnapshot",
    "SyntaxError",        "DuplicateStepId",     "ContextBudgetExceeded",
    "UnparseableOutput",  "BackendUnavailable",  "UnknownTemplate",
    "InvalidScript",      "WrongState",          "EmptyIndex",
    "InvalidArgument",    "UnknownCalculator",   "InputOutOfRange",
    "EvaluationError",    "MalformedTemplate",   "MalformedRecord",
    "MalformedSchema",    "MalformedConfig",     "ExhaustedRetries",
    "EmptyInput",         "IoError",
};

std::string compose(Errc code, const std::string& detail) {
    std::string out(to_string(code));
    if (!detail.empty()) {
        out += ": ";
        out += detail;
    }
    return out;
}

}  // namespace

std::string_view to_string(Errc code) noexcept {
    auto index = static_cast<std::size_t>(code);
    return index < kErrcNames.size() ? kErrcNames[index] : "Unknown";
}

Error::Error(Errc code, std::string detail)
    : std::runtime_error(compose(code, detail)), code_(code), detail_(std::move(detail)) {}

InvariantViolation::InvariantViolation(std::string field, std::string reason)
    : Error(Errc::InvariantViolation, field + ": " + reason),
      field_(std::move(field)),
      reason_(std::move(reason)) {}

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::string expected)
    : Error(Errc::SyntaxError, "line " + std::to_string(line) + ", column " +
                                   std::to_string(column) + ": expected " + expected),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

}  // namespace almanac

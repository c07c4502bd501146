#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace almanac {

/// Machine-readable error categories shared by every module.
enum class Errc {
    MalformedJson,
    UnknownResourceType,
    InvariantViolation,
    DanglingReference,
    DuplicateId,
    NotFound,
    UnknownField,
    InvalidQuery,
    CorruptSnapshot,
    SyntaxError,
    DuplicateStepId,
    ContextBudgetExceeded,
    UnparseableOutput,
    BackendUnavailable,
    UnknownTemplate,
    InvalidScript,
    WrongState,
    EmptyIndex,
    InvalidArgument,
    UnknownCalculator,
    InputOutOfRange,
    EvaluationError,
    MalformedTemplate,
    MalformedRecord,
    MalformedSchema,
    MalformedConfig,
    ExhaustedRetries,
    EmptyInput,
    IoError,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string detail);

    Errc code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

/// A resource field broke one of its invariants.
class InvariantViolation : public Error {
public:
    InvariantViolation(std::string field, std::string reason);

    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string field_;
    std::string reason_;
};

/// Positioned parse failure (1-based line and column).
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, std::size_t column, std::string expected);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string expected_;
};

}  // namespace almanac

#pragma once

#include "almanac/fhir/model.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace almanac::store {

enum class FilterOp { Eq, Ge, Le, Contains };

std::string_view to_string(FilterOp op) noexcept;
std::optional<FilterOp> filter_op_from_string(std::string_view text) noexcept;

struct Filter {
    std::string field;
    FilterOp op = FilterOp::Eq;
    std::string value;
};

struct SortKey {
    std::string field;
    bool descending = false;
};

struct SearchQuery {
    fhir::ResourceType type = fhir::ResourceType::Patient;
    std::vector<Filter> filters;
    std::optional<SortKey> sort;
    std::size_t limit = 1000;
};

/**
 * Value kinds of search fields.
 *
 * - Text: `eq` is case-insensitive equality, `contains` a case-insensitive
 *   substring test, `ge`/`le` compare bytewise.
 * - Token: exact code match; `contains` is rejected.
 * - Reference: matches the target id, with or without the `Type/` prefix.
 * - Date: `eq` matches the UTC calendar day. `ge`/`le` compare calendar days
 *   when the filter value is a date and instants otherwise.
 * - Number: numeric comparison; `eq` is exact.
 */
enum class FieldKind { Text, Token, Reference, Date, Number };

using FieldValue = std::variant<std::string, fhir::DateTime, double>;

struct SearchField {
    std::string name;
    FieldKind kind;
    std::function<std::optional<FieldValue>(const fhir::FhirResource&)> extract;
};

/// Searchable fields of `type`, in a fixed order.
const std::vector<SearchField>& search_fields(fhir::ResourceType type);
const SearchField* find_search_field(fhir::ResourceType type, std::string_view name);

/// Throws UnknownField or InvalidQuery for an ill-formed query.
void check_query(const SearchQuery& query);

/// Whether `resource` satisfies every filter. `query` must pass check_query.
bool matches(const SearchQuery& query, const fhir::FhirResource& resource);

/// Ordering used for results: sort key (missing values first), then id.
bool result_before(const SearchQuery& query, const fhir::FhirResource& a, const fhir::FhirResource& b);

}  // namespace almanac::store

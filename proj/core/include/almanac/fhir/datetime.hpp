#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace almanac::fhir {

/**
 * @brief ISO-8601 calendar date or UTC date-time at second precision.
 *
 * Accepted inputs are the extended forms only: `YYYY-MM-DD` and
 * `YYYY-MM-DDThh:mm:ss[.fff][Z|+hh:mm|-hh:mm]`. Offsets are folded into UTC
 * and fractional seconds are dropped, so the canonical rendering is either
 * `YYYY-MM-DD` or `YYYY-MM-DDThh:mm:ssZ`.
 */
class DateTime {
public:
    DateTime() = default;

    static std::optional<DateTime> parse(std::string_view text);
    static DateTime from_epoch_seconds(std::int64_t seconds);
    static DateTime from_date(int year, int month, int day);

    bool date_only() const noexcept { return date_only_; }
    std::int64_t epoch_seconds() const noexcept { return epoch_; }

    std::string to_string() const;
    /// Calendar day in UTC, `YYYY-MM-DD`.
    std::string day() const;

    DateTime plus_seconds(std::int64_t seconds) const;

    auto operator<=>(const DateTime&) const = default;

private:
    std::int64_t epoch_ = 0;
    bool date_only_ = true;
};

/// True when `text` is accepted by DateTime::parse.
bool is_iso_datetime(std::string_view text);

std::int64_t days_from_civil(int year, int month, int day) noexcept;

}  // namespace almanac::fhir

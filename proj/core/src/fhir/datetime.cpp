#include "almanac/fhir/datetime.hpp"

#include <cstdio>

namespace almanac::fhir {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

bool read_digits(std::string_view text, std::size_t pos, std::size_t count, int& out) {
    if (pos + count > text.size()) return false;
    int value = 0;
    for (std::size_t i = 0; i < count; ++i) {
        char c = text[pos + i];
        if (c < '0' || c > '9') return false;
        value = value * 10 + (c - '0');
    }
    out = value;
    return true;
}

bool is_leap(int year) noexcept {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) noexcept {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return month == 2 && is_leap(year) ? 29 : kDays[month - 1];
}

struct Civil {
    int year;
    int month;
    int day;
};

Civil civil_from_days(std::int64_t z) noexcept {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

std::int64_t days_from_civil(int year, int month, int day) noexcept {
    year -= month <= 2;
    const std::int64_t era = (year >= 0 ? year : year - 399) / 400;
    const auto yoe = static_cast<unsigned>(year - era * 400);
    const unsigned mp = static_cast<unsigned>(month > 2 ? month - 3 : month + 9);
    const unsigned doy = (153 * mp + 2) / 5 + static_cast<unsigned>(day) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::optional<DateTime> DateTime::parse(std::string_view text) {
    int year = 0, month = 0, day = 0;
    if (text.size() < 10 || !read_digits(text, 0, 4, year) || text[4] != '-' ||
        !read_digits(text, 5, 2, month) || text[7] != '-' || !read_digits(text, 8, 2, day)) {
        return std::nullopt;
    }
    if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) {
        return std::nullopt;
    }
    DateTime out;
    out.epoch_ = days_from_civil(year, month, day) * kSecondsPerDay;
    if (text.size() == 10) {
        out.date_only_ = true;
        return out;
    }

    int hour = 0, minute = 0, second = 0;
    if (text[10] != 'T' || !read_digits(text, 11, 2, hour) || text.size() < 19 ||
        text[13] != ':' || !read_digits(text, 14, 2, minute) || text[16] != ':' ||
        !read_digits(text, 17, 2, second)) {
        return std::nullopt;
    }
    if (hour > 23 || minute > 59 || second > 59) return std::nullopt;

    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
    }
    std::int64_t offset = 0;
    if (pos == text.size()) {
        // No zone designator: read as UTC.
    } else if (text[pos] == 'Z' && pos + 1 == text.size()) {
        ++pos;
    } else if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size()) {
        int oh = 0, om = 0;
        if (!read_digits(text, pos + 1, 2, oh) || text[pos + 3] != ':' ||
            !read_digits(text, pos + 4, 2, om) || oh > 23 || om > 59) {
            return std::nullopt;
        }
        offset = (oh * 3600 + om * 60) * (text[pos] == '+' ? 1 : -1);
    } else {
        return std::nullopt;
    }
    out.epoch_ += hour * 3600 + minute * 60 + second - offset;
    out.date_only_ = false;
    return out;
}

DateTime DateTime::from_epoch_seconds(std::int64_t seconds) {
    DateTime out;
    out.epoch_ = seconds;
    out.date_only_ = false;
    return out;
}

DateTime DateTime::from_date(int year, int month, int day) {
    DateTime out;
    out.epoch_ = days_from_civil(year, month, day) * kSecondsPerDay;
    out.date_only_ = true;
    return out;
}

std::string DateTime::day() const {
    Civil c = civil_from_days(floor_div(epoch_, kSecondsPerDay));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", c.year, c.month, c.day);
    return buf;
}

std::string DateTime::to_string() const {
    if (date_only_) return day();
    std::int64_t days = floor_div(epoch_, kSecondsPerDay);
    auto rem = static_cast<int>(epoch_ - days * kSecondsPerDay);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", day().c_str(), rem / 3600, (rem / 60) % 60,
                  rem % 60);
    return buf;
}

DateTime DateTime::plus_seconds(std::int64_t seconds) const {
    return from_epoch_seconds(epoch_ + seconds);
}

bool is_iso_datetime(std::string_view text) {
    return DateTime::parse(text).has_value();
}

}  // namespace almanac::fhir

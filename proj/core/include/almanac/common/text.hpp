#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace almanac {

std::string to_lower(std::string_view text);
std::string_view trim(std::string_view text) noexcept;
bool iequals(std::string_view a, std::string_view b) noexcept;
/// Case-insensitive (ASCII) substring test.
bool icontains(std::string_view haystack, std::string_view needle);
bool starts_with(std::string_view text, std::string_view prefix) noexcept;
std::vector<std::string> split(std::string_view text, char sep);

/// Shortest round-trip decimal rendering, identical to the JSON serializer's.
std::string format_number(double value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
/// Newline-separated lines without trailing '\r'; a final empty line is dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace almanac

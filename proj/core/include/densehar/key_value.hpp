#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace densehar {

// Line-based `key = value` text with `#` comments, used for run configs,
// dataset schema sidecars and synthetic-data specs.
struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<KeyValueEntry> parse_key_values(std::string_view text, std::string_view source);
std::vector<KeyValueEntry> read_key_values(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Strict scalar parsers; the whole string must be consumed. Failures throw
// kParse naming `what`.
std::size_t parse_count(std::string_view text, std::string_view what);
std::int64_t parse_integer(std::string_view text, std::string_view what);
std::uint64_t parse_unsigned(std::string_view text, std::string_view what);
double parse_real(std::string_view text, std::string_view what);
float parse_float(std::string_view text, std::string_view what);
bool parse_flag(std::string_view text, std::string_view what);

// Shortest representation that parses back to the same value.
std::string format_real(double value);
std::string format_float(float value);

std::string_view trim(std::string_view text) noexcept;

}  // namespace densehar

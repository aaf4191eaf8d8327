#include "densehar/key_value.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "densehar/error.hpp"

namespace densehar {

std::string_view trim(std::string_view text) noexcept {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<KeyValueEntry> parse_key_values(std::string_view text, std::string_view source) {
  std::vector<KeyValueEntry> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    ++line_no;
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::kParse, std::string(source) + ":" + std::to_string(line_no) +
                                  ": expected `key = value`");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      fail(ErrorKind::kParse, std::string(source) + ":" + std::to_string(line_no) + ": empty key");
    }
    entries.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return entries;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write to " + path.string() + " failed");
}

std::vector<KeyValueEntry> read_key_values(const std::filesystem::path& path) {
  return parse_key_values(read_text_file(path), path.string());
}

namespace {

template <typename N>
N parse_number(std::string_view text, std::string_view what, const char* expected) {
  text = trim(text);
  N value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    fail(ErrorKind::kParse, std::string(what) + ": expected " + expected + ", got '" +
                                std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::size_t parse_count(std::string_view text, std::string_view what) {
  return parse_number<std::size_t>(text, what, "a nonnegative integer");
}

std::int64_t parse_integer(std::string_view text, std::string_view what) {
  return parse_number<std::int64_t>(text, what, "an integer");
}

std::uint64_t parse_unsigned(std::string_view text, std::string_view what) {
  return parse_number<std::uint64_t>(text, what, "a nonnegative integer");
}

double parse_real(std::string_view text, std::string_view what) {
  const double v = parse_number<double>(text, what, "a real number");
  require(std::isfinite(v), ErrorKind::kParse, std::string(what) + ": value is not finite");
  return v;
}

float parse_float(std::string_view text, std::string_view what) {
  const float v = parse_number<float>(text, what, "a real number");
  require(std::isfinite(v), ErrorKind::kParse, std::string(what) + ": value is not finite");
  return v;
}

bool parse_flag(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  fail(ErrorKind::kParse, std::string(what) + ": expected true/false, got '" + std::string(text) + "'");
}

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_float(float value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace densehar

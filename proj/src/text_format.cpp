// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/text_format.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "voxadapt/error.hpp"

namespace voxadapt {
namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view text, std::string_view key, const char* kind) {
  fail(ErrorCode::kConfig,
       "key " + std::string(key) + ": '" + std::string(text) + "' is not a valid " + kind);
}

}  // namespace

int parse_int(std::string_view text, std::string_view key) {
  text = trim(text);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad_value(text, key, "integer");
  return v;
}

std::uint64_t parse_u64(std::string_view text, std::string_view key) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad_value(text, key, "unsigned integer");
  return v;
}

double parse_real(std::string_view text, std::string_view key) {
  text = trim(text);
  // std::from_chars for double is not available in every libstdc++ we target.
  std::string s(text);
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (in.fail() || !in.eof() || !std::isfinite(v)) bad_value(text, key, "real number");
  return v;
}

bool parse_bool(std::string_view text, std::string_view key) {
  text = trim(text);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  bad_value(text, key, "boolean");
}

std::string format_real(double value) {
  // Shortest text that parses back to the same double.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  require(res.ec == std::errc(), ErrorCode::kFormat, "cannot format real value");
  return std::string(buf, res.ptr);
}

std::map<std::string, std::string> parse_key_value_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string_view::npos, ErrorCode::kConfig,
            "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    require(!key.empty(), ErrorCode::kConfig, "line " + std::to_string(line_no) + ": empty key");
    require(out.emplace(key, value).second, ErrorCode::kConfig, "duplicate key " + key);
  }
  return out;
}

std::string format_key_value_text(const std::map<std::string, std::string>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

}  // namespace voxadapt

// SPDX-License-Identifier: Apache-2.0
//
// Scalar parsing/formatting shared by the key=value config files. Reals are
// printed with max_digits10 so that text round trips are exact.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace voxadapt {

int parse_int(std::string_view text, std::string_view key);
std::uint64_t parse_u64(std::string_view text, std::string_view key);
double parse_real(std::string_view text, std::string_view key);
bool parse_bool(std::string_view text, std::string_view key);

std::string format_real(double value);
inline std::string format_bool(bool value) { return value ? "true" : "false"; }

/// Parses "key = value" lines; '#' starts a comment; blank lines ignored.
/// Duplicate keys are an error.
std::map<std::string, std::string> parse_key_value_text(std::string_view text);
std::string format_key_value_text(const std::map<std::string, std::string>& entries);

}  // namespace voxadapt

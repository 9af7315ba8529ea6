// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxadapt {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kNonFinite,
  kOutOfRange,
  kState,
  kFormat,
  kIo,
  kConfig,
};

std::string_view to_string(ErrorCode code);

/// Error carrying a stable machine-readable code; what() is "<code>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace voxadapt

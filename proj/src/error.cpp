// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/error.hpp"

namespace voxadapt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kState: return "invalid_state";
    case ErrorCode::kFormat: return "bad_format";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kConfig: return "bad_config";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace voxadapt

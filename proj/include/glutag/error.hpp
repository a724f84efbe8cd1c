#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glutag {

enum class ErrorCode {
  kInfeasibleTarget,
  kTooLarge,
  kInvalidStrong,
  kParseError,
  kEmptySignal,
  kBadRange,
  kBadMagic,
  kTruncated,
  kShapeMismatch,
  kNotDivisible,
  kNanGradient,
  kEmptyDataset,
  kAllInfeasible,
  kBadTemplate,
  kPlacementFailed,
  kIo,
  kConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInfeasibleTarget: return "INFEASIBLE_TARGET";
    case ErrorCode::kTooLarge: return "TOO_LARGE";
    case ErrorCode::kInvalidStrong: return "INVALID_STRONG";
    case ErrorCode::kParseError: return "PARSE_ERROR";
    case ErrorCode::kEmptySignal: return "EMPTY_SIGNAL";
    case ErrorCode::kBadRange: return "BAD_RANGE";
    case ErrorCode::kBadMagic: return "BAD_MAGIC";
    case ErrorCode::kTruncated: return "TRUNCATED";
    case ErrorCode::kShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::kNotDivisible: return "NOT_DIVISIBLE";
    case ErrorCode::kNanGradient: return "NAN_GRADIENT";
    case ErrorCode::kEmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::kAllInfeasible: return "ALL_INFEASIBLE";
    case ErrorCode::kBadTemplate: return "BAD_TEMPLATE";
    case ErrorCode::kPlacementFailed: return "PLACEMENT_FAILED";
    case ErrorCode::kIo: return "IO_ERROR";
    case ErrorCode::kConfig: return "CONFIG_ERROR";
  }
  return "UNKNOWN";
}

/// Exception carrying a machine-readable code. what() is "<CODE>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace glutag

#pragma once

#include <stdexcept>
#include <string>

namespace rigcal {

enum class ErrorCode {
  kAngleNearPi,
  kBehindCamera,
  kNonPositiveDepth,
  kInvalidArgument,
  kMissingFile,
  kMalformedJson,
  kDimensionMismatch,
  kBadMagic,
  kNonContiguousIds,
  kNotARotation,
  kIoError,
  kCameraOutsideScene,
  kNoValidPixels,
  kDegenerateProblem,
  kNotPositiveDefinite,
  kSingularNormalEquations,
  kCountMismatch,
  kEmptyVariant,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. The message names the offending camera, file or
/// field whenever one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rigcal

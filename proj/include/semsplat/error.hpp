#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace semsplat {

enum class ErrorCode {
  kMissingArtifact,
  kSchemaViolation,
  kCorruptFeature,
  kCorruptRegion,
  kShapeError,
  kDegenerateFeature,
  kNumericalFailure,
  kEmptyDataset,
  kStaleState,
  kEmptySupervision,
  kEmptyQuerySet,
  kEmptySelection,
  kEmptyPairSet,
  kGenerationFailure,
  kInvalidConfig,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception. `code()` is the
// machine-readable kind; `what()` carries the human detail.
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

}  // namespace semsplat

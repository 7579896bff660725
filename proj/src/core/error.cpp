#include "semsplat/error.hpp"

namespace semsplat {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kCorruptFeature: return "CorruptFeature";
    case ErrorCode::kCorruptRegion: return "CorruptRegion";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kDegenerateFeature: return "DegenerateFeature";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kStaleState: return "StaleState";
    case ErrorCode::kEmptySupervision: return "EmptySupervision";
    case ErrorCode::kEmptyQuerySet: return "EmptyQuerySet";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kEmptyPairSet: return "EmptyPairSet";
    case ErrorCode::kGenerationFailure: return "GenerationFailure";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace semsplat

#include "dnr/error.hpp"

namespace dnr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedLabel: return "MalformedLabel";
    case ErrorCode::kArityMismatch: return "ArityMismatch";
    case ErrorCode::kNonMovableGrasp: return "NonMovableGrasp";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNonUnitQuaternion: return "NonUnitQuaternion";
    case ErrorCode::kEmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::kMissingManifest: return "MissingManifest";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kValidationFailed: return "ValidationFailed";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNoMovableArgument: return "NoMovableArgument";
    case ErrorCode::kAnnotatorUnavailable: return "AnnotatorUnavailable";
    case ErrorCode::kUnparseableAnnotation: return "UnparseableAnnotation";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kMissingEmbedding: return "MissingEmbedding";
    case ErrorCode::kNoActionsFound: return "NoActionsFound";
    case ErrorCode::kActionOutOfRange: return "ActionOutOfRange";
    case ErrorCode::kPromptTooLong: return "PromptTooLong";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kAuthMissing: return "AuthMissing";
    case ErrorCode::kContextOverflow: return "ContextOverflow";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace dnr

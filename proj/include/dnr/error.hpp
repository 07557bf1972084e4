#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dnr {

enum class ErrorCode {
  kInvalidArgument,
  // skill grammar
  kMalformedLabel,
  kArityMismatch,
  kNonMovableGrasp,
  // action codec
  kIndexOutOfRange,
  kNonUnitQuaternion,
  // demo store
  kEmptyTrajectory,
  kMissingManifest,
  kMalformedRecord,
  kValidationFailed,
  kIoError,
  // skill collection
  kNoMovableArgument,
  kAnnotatorUnavailable,
  kUnparseableAnnotation,
  // retrieval
  kDimensionMismatch,
  kEmptyInput,
  kMissingEmbedding,
  // prompts
  kNoActionsFound,
  kActionOutOfRange,
  kPromptTooLong,
  // providers
  kTransportError,
  kAuthMissing,
  kContextOverflow,
  kZeroVector,
  kMissingFile,
  // pipeline
  kConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dnr

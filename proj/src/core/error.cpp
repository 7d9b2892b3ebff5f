#include "core/error.hpp"

namespace advpaint {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kContract: return "contract";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kBadVersion: return "bad-version";
    case ErrorCode::kDuplicateName: return "duplicate-name";
    case ErrorCode::kSizeOverflow: return "size-overflow";
    case ErrorCode::kCheckpoint: return "checkpoint";
    case ErrorCode::kTraining: return "training";
    case ErrorCode::kAttack: return "attack";
  }
  return "unknown";
}

}  // namespace advpaint

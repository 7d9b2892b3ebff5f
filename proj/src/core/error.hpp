#pragma once

#include <stdexcept>
#include <string>

namespace advpaint {

// Numeric values are part of the C ABI (see include/advpaint/advpaint.h).
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kDimension = 2,
  kContract = 3,
  kNumeric = 4,
  kConfig = 5,
  kIo = 6,
  kFormat = 7,
  kTruncated = 8,
  kBadMagic = 9,
  kBadVersion = 10,
  kDuplicateName = 11,
  kSizeOverflow = 12,
  kCheckpoint = 13,
  kTraining = 14,
  kAttack = 15,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace advpaint

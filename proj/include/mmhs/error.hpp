#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmhs {

// Every failure the library reports carries one of these codes so callers
// (and the CLI exit path) can branch on the kind without parsing messages.
enum class Errc {
  kMissingFile,
  kDuplicateIndex,
  kUnreadableImage,
  kMalformedRow,
  kUnlabeledSample,
  kEmptyManifest,
  kEmptyClass,
  kBadFractions,
  kEngineUnavailable,
  kEngineFailure,
  kTimeout,
  kCacheWriteFailure,
  kUnsupportedColorSpace,
  kShapeMismatch,
  kConfigError,
  kBackboneMismatch,
  kRoleMismatch,
  kNonFiniteLogits,
  kMissingText,
  kEmptyBatch,
  kNonFiniteLoss,
  kFingerprintMismatch,
  kCorruptCheckpoint,
  kLengthMismatch,
  kEmptyInput,
  kEmptyMatrix,
  kUnknownVariant,
  kDuplicateVariant,
  kEmptyHistory,
  kUnwritableDirectory,
  kIoError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }
  // The bare payload (an index, a line number, a path) without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace mmhs

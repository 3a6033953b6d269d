#include "mmhs/error.hpp"

namespace mmhs {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kMissingFile: return "MissingFile";
    case Errc::kDuplicateIndex: return "DuplicateIndex";
    case Errc::kUnreadableImage: return "UnreadableImage";
    case Errc::kMalformedRow: return "MalformedRow";
    case Errc::kUnlabeledSample: return "UnlabeledSample";
    case Errc::kEmptyManifest: return "EmptyManifest";
    case Errc::kEmptyClass: return "EmptyClass";
    case Errc::kBadFractions: return "BadFractions";
    case Errc::kEngineUnavailable: return "EngineUnavailable";
    case Errc::kEngineFailure: return "EngineFailure";
    case Errc::kTimeout: return "Timeout";
    case Errc::kCacheWriteFailure: return "CacheWriteFailure";
    case Errc::kUnsupportedColorSpace: return "UnsupportedColorSpace";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kBackboneMismatch: return "BackboneMismatch";
    case Errc::kRoleMismatch: return "RoleMismatch";
    case Errc::kNonFiniteLogits: return "NonFiniteLogits";
    case Errc::kMissingText: return "MissingText";
    case Errc::kEmptyBatch: return "EmptyBatch";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kFingerprintMismatch: return "FingerprintMismatch";
    case Errc::kCorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kEmptyMatrix: return "EmptyMatrix";
    case Errc::kUnknownVariant: return "UnknownVariant";
    case Errc::kDuplicateVariant: return "DuplicateVariant";
    case Errc::kEmptyHistory: return "EmptyHistory";
    case Errc::kUnwritableDirectory: return "UnwritableDirectory";
    case Errc::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

}  // namespace mmhs

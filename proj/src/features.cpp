#include "mmhs/features.hpp"

#include <string>

#include "mmhs/error.hpp"

namespace mmhs {

std::string_view branch_role_name(BranchRole role) noexcept {
  switch (role) {
    case BranchRole::kVision: return "F1";
    case BranchRole::kTextA: return "F2";
    case BranchRole::kTextB: return "F3";
  }
  return "?";
}

BranchFeature::BranchFeature(BranchRole role, Vector values) : role_(role), values_(std::move(values)) {
  if (values_.size() != kBranchDim) {
    throw Error(Errc::kShapeMismatch, std::string(branch_role_name(role)) + " has length " +
                                          std::to_string(values_.size()) + ", expected 512");
  }
  if (!values_.allFinite()) {
    throw Error(Errc::kConfigError, std::string(branch_role_name(role)) + " has non-finite entries");
  }
}

}  // namespace mmhs

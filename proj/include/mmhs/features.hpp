#pragma once

#include <array>
#include <string_view>

#include "mmhs/nn.hpp"

namespace mmhs {

inline constexpr Eigen::Index kBranchDim = 512;
inline constexpr Eigen::Index kNumBranches = 3;
inline constexpr Eigen::Index kFusedDim = kBranchDim * kNumBranches;

// Fixed concatenation order: vision (F1), first text backbone (F2), second
// text backbone (F3).
enum class BranchRole : int { kVision = 0, kTextA = 1, kTextB = 2 };

std::string_view branch_role_name(BranchRole role) noexcept;

// A projected 512-d branch output tagged with the slot it fills.
class BranchFeature {
 public:
  // Throws ShapeMismatch on wrong length, ConfigError on non-finite entries.
  BranchFeature(BranchRole role, Vector values);

  BranchRole role() const noexcept { return role_; }
  const Vector& values() const noexcept { return values_; }

 private:
  BranchRole role_;
  Vector values_;
};

using VisionFeature = BranchFeature;
using TextFeature = BranchFeature;

// Which branches feed the head. The full ensemble has all three.
struct BranchMask {
  std::array<bool, kNumBranches> active{true, true, true};

  bool has(BranchRole r) const { return active[static_cast<std::size_t>(r)]; }
  int count() const { return int(active[0]) + int(active[1]) + int(active[2]); }
  bool operator==(const BranchMask&) const = default;
};

}  // namespace mmhs

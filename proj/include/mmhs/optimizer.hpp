#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmhs/nn.hpp"

namespace mmhs {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Coupled L2: weight_decay * value is added to the gradient before the
  // moment updates.
  double weight_decay = 0.0;
};

struct AdamMoments {
  Matrix first;
  Matrix second;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Skips parameters with trainable == false.
  void step(const std::vector<Parameter*>& params, double learning_rate);

  std::int64_t step_count() const noexcept { return step_count_; }
  const std::map<std::string, AdamMoments>& moments() const noexcept { return moments_; }
  const AdamOptions& options() const noexcept { return options_; }

  void restore(std::int64_t step_count, std::map<std::string, AdamMoments> moments);

 private:
  AdamOptions options_;
  std::int64_t step_count_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

}  // namespace mmhs

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmhs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// y = W x + b on column-batched inputs (features x batch).
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, Eigen::Index in_features, Eigen::Index out_features);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
  void init_uniform_fan_in(std::uint64_t seed);

  Matrix forward(const Matrix& x) const;
  // Accumulates dW, db; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& grad_out);

  Eigen::Index in_features() const { return weight_.value.cols(); }
  Eigen::Index out_features() const { return weight_.value.rows(); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

  void set_trainable(bool trainable);
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;

 private:
  Parameter weight_;
  Parameter bias_;
};

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

// Passes gradient where the pre-activation was strictly positive.
inline Matrix relu_backward(const Matrix& pre, const Matrix& grad_out) {
  return (pre.array() > 0.0).select(grad_out, 0.0);
}

// Column-wise softmax, numerically stabilized.
Matrix softmax_columns(const Matrix& logits);

void zero_grads(const std::vector<Parameter*>& params);

}  // namespace mmhs

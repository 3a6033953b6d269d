#include "mmhs/nn.hpp"

#include <cmath>

#include "mmhs/rng.hpp"

namespace mmhs {

Linear::Linear(std::string name, Eigen::Index in_features, Eigen::Index out_features) {
  weight_.name = name + ".weight";
  weight_.value = Matrix::Zero(out_features, in_features);
  bias_.name = name + ".bias";
  bias_.value = Matrix::Zero(out_features, 1);
  weight_.zero_grad();
  bias_.zero_grad();
}

void Linear::init_uniform_fan_in(std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
  // Row-major fill order so the draw sequence is independent of Eigen storage.
  for (Eigen::Index r = 0; r < weight_.value.rows(); ++r) {
    for (Eigen::Index c = 0; c < weight_.value.cols(); ++c) {
      weight_.value(r, c) = rng.uniform(-bound, bound);
    }
  }
  bias_.value.setZero();
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& grad_out) {
  weight_.grad.noalias() += grad_out * x.transpose();
  bias_.grad.col(0) += grad_out.rowwise().sum();
  return weight_.value.transpose() * grad_out;
}

void Linear::set_trainable(bool trainable) {
  weight_.trainable = trainable;
  bias_.trainable = trainable;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Linear::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - m).exp();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace mmhs

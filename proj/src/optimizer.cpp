#include "mmhs/optimizer.hpp"

#include <cmath>

namespace mmhs {

void Adam::step(const std::vector<Parameter*>& params, double learning_rate) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [it, inserted] = moments_.try_emplace(p->name);
    AdamMoments& m = it->second;
    if (inserted || m.first.rows() != p->value.rows() || m.first.cols() != p->value.cols()) {
      m.first = Matrix::Zero(p->value.rows(), p->value.cols());
      m.second = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    Matrix g = p->grad;
    if (options_.weight_decay != 0.0) g += options_.weight_decay * p->value;
    m.first = options_.beta1 * m.first + (1.0 - options_.beta1) * g;
    m.second = options_.beta2 * m.second + (1.0 - options_.beta2) * g.cwiseProduct(g);
    p->value.array() -= learning_rate * (m.first.array() / correction1) /
                        ((m.second.array() / correction2).sqrt() + options_.epsilon);
  }
}

void Adam::restore(std::int64_t step_count, std::map<std::string, AdamMoments> moments) {
  step_count_ = step_count;
  moments_ = std::move(moments);
}

}  // namespace mmhs

#include "mmhs/fusion_model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mmhs/error.hpp"
#include "mmhs/rng.hpp"

namespace mmhs {

FusedFeature fuse(const VisionFeature& f1, const TextFeature& f2, const TextFeature& f3) {
  const std::array<const BranchFeature*, 3> parts{&f1, &f2, &f3};
  FusedFeature out{Vector(kFusedDim)};
  for (std::size_t r = 0; r < parts.size(); ++r) {
    const auto expected = static_cast<BranchRole>(r);
    if (parts[r]->role() != expected) {
      throw Error(Errc::kRoleMismatch, fmt::format("slot {} received {}", branch_role_name(expected),
                                                   branch_role_name(parts[r]->role())));
    }
    out.values.segment(static_cast<Eigen::Index>(r) * kBranchDim, kBranchDim) = parts[r]->values();
  }
  return out;
}

ClassificationHead::ClassificationHead(Eigen::Index in_dim)
    : hidden_("head.hidden", in_dim, kHiddenDim), output_("head.output", kHiddenDim, kNumClasses) {}

Matrix ClassificationHead::forward(const Matrix& f4) const {
  if (f4.rows() != in_dim()) {
    throw Error(Errc::kShapeMismatch, fmt::format("head expects {} inputs, got {}", in_dim(), f4.rows()));
  }
  return output_.forward(relu(hidden_.forward(f4)));
}

Vector head_forward(const FusedFeature& f4, const ClassificationHead& head) {
  return head.forward(f4.values).col(0);
}

Prediction predict(const std::array<double, kNumClasses>& logits) {
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error(Errc::kNonFiniteLogits, fmt::format("({}, {})", logits[0], logits[1]));
  }
  Prediction p;
  p.logits = logits;
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  p.probabilities = {e0 / (e0 + e1), e1 / (e0 + e1)};
  p.label = logits[1] > logits[0] ? Label::kHateSpeech : Label::kNoHateSpeech;
  p.confidence = p.probabilities[label_code(p.label)];
  return p;
}

Prediction predict(const Vector& logits) {
  if (logits.size() != static_cast<Eigen::Index>(kNumClasses)) {
    throw Error(Errc::kShapeMismatch, fmt::format("expected 2 logits, got {}", logits.size()));
  }
  return predict(std::array<double, kNumClasses>{logits(0), logits(1)});
}

Eigen::Index NativeBatch::batch_size() const {
  for (const Matrix* m : {&vision, &text_a, &text_b}) {
    if (m->size() > 0) return m->cols();
  }
  return 0;
}

NativeBatch NativeBatch::select(const std::vector<std::size_t>& columns) const {
  NativeBatch out;
  auto pick = [&](const Matrix& src, Matrix& dst) {
    if (src.size() == 0) return;
    dst.resize(src.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
      dst.col(static_cast<Eigen::Index>(j)) = src.col(static_cast<Eigen::Index>(columns[j]));
    }
  };
  pick(vision, out.vision);
  pick(text_a, out.text_a);
  pick(text_b, out.text_b);
  return out;
}

FusionModel::FusionModel(std::shared_ptr<const VisionBackbone> vision, std::shared_ptr<const TextBackbone> text_a,
                         std::shared_ptr<const TextBackbone> text_b)
    : FusionModel(std::move(vision), std::move(text_a), std::move(text_b), Options{}) {}

FusionModel::FusionModel(std::shared_ptr<const VisionBackbone> vision, std::shared_ptr<const TextBackbone> text_a,
                         std::shared_ptr<const TextBackbone> text_b, Options options)
    : options_(options),
      vision_(std::move(vision)),
      text_a_(std::move(text_a), BranchRole::kTextA),
      text_b_(std::move(text_b), BranchRole::kTextB),
      head_(options.zero_fill ? kFusedDim : kBranchDim * options.branches.count()) {
  if (options.branches.count() == 0) throw Error(Errc::kConfigError, "at least one branch must be active");
}

FusionModel::FusionModel(const BackboneSet& backbones, Options options)
    : FusionModel(backbones.vision, backbones.text_a, backbones.text_b, options) {}

void FusionModel::initialize(std::uint64_t seed) {
  vision_.projection().init_uniform_fan_in(mix_seed(seed, 100));
  text_a_.projection().init_uniform_fan_in(mix_seed(seed, 101));
  text_b_.projection().init_uniform_fan_in(mix_seed(seed, 102));
  head_.hidden().init_uniform_fan_in(mix_seed(seed, 200));
  head_.output().init_uniform_fan_in(mix_seed(seed, 201));
}

ArchitectureInfo FusionModel::architecture() const {
  return ArchitectureInfo{vision_.backbone().identity(), text_a_.backbone().identity(),
                          text_b_.backbone().identity(), options_.branches, options_.zero_fill, head_.in_dim()};
}

std::vector<Parameter*> FusionModel::branch_parameters() {
  std::vector<Parameter*> out;
  if (options_.branches.has(BranchRole::kVision)) vision_.projection().collect(out);
  if (options_.branches.has(BranchRole::kTextA)) text_a_.projection().collect(out);
  if (options_.branches.has(BranchRole::kTextB)) text_b_.projection().collect(out);
  return out;
}

std::vector<Parameter*> FusionModel::parameters() {
  std::vector<Parameter*> out = branch_parameters();
  head_.hidden().collect(out);
  head_.output().collect(out);
  return out;
}

std::vector<const Parameter*> FusionModel::parameters() const {
  std::vector<const Parameter*> out;
  if (options_.branches.has(BranchRole::kVision)) vision_.projection().collect(out);
  if (options_.branches.has(BranchRole::kTextA)) text_a_.projection().collect(out);
  if (options_.branches.has(BranchRole::kTextB)) text_b_.projection().collect(out);
  head_.hidden().collect(out);
  head_.output().collect(out);
  return out;
}

void FusionModel::set_branches_trainable(bool trainable) {
  vision_.projection().set_trainable(trainable);
  text_a_.projection().set_trainable(trainable);
  text_b_.projection().set_trainable(trainable);
}

NativeBatch FusionModel::native_features(const Sample& sample, const InferenceOptions& options) const {
  NativeBatch out;
  const bool needs_text = options_.branches.has(BranchRole::kTextA) || options_.branches.has(BranchRole::kTextB);
  if (needs_text && !sample.ocr_text) throw Error(Errc::kMissingText, sample.index);
  if (options_.branches.has(BranchRole::kVision)) {
    const PreprocessConfig& pre = options.preprocess;
    out.vision = vision_.backbone().embed(preprocess_image(sample.resolved_path, pre));
  }
  if (options_.branches.has(BranchRole::kTextA)) {
    out.text_a = text_a_.pooled(tokenize(*sample.ocr_text, text_a_.backbone(), options.max_seq_len));
  }
  if (options_.branches.has(BranchRole::kTextB)) {
    out.text_b = text_b_.pooled(tokenize(*sample.ocr_text, text_b_.backbone(), options.max_seq_len));
  }
  return out;
}

Matrix FusionModel::fused(const NativeBatch& batch, ForwardCache* cache) const {
  const Eigen::Index n = batch.batch_size();
  const std::array<const Matrix*, 3> natives{&batch.vision, &batch.text_a, &batch.text_b};
  const std::array<const Linear*, 3> projections{&vision_.projection(), &text_a_.projection(),
                                                 &text_b_.projection()};
  Matrix f4 = Matrix::Zero(head_.in_dim(), n);
  Eigen::Index offset = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    const auto role = static_cast<BranchRole>(r);
    if (!options_.branches.has(role)) {
      if (options_.zero_fill) offset += kBranchDim;
      continue;
    }
    const Matrix& native = *natives[r];
    if (native.cols() != n || native.rows() != projections[r]->in_features()) {
      throw Error(Errc::kShapeMismatch, fmt::format("{} native batch is {}x{}, expected {}x{}",
                                                    branch_role_name(role), native.rows(), native.cols(),
                                                    projections[r]->in_features(), n));
    }
    Matrix pre = projections[r]->forward(native);
    f4.middleRows(offset, kBranchDim) = relu(pre);
    if (cache != nullptr) cache->projection_pre[r] = std::move(pre);
    offset += kBranchDim;
  }
  return f4;
}

Matrix FusionModel::logits(const NativeBatch& batch, ForwardCache* cache) const {
  Matrix f4 = fused(batch, cache);
  if (cache == nullptr) return head_.forward(f4);
  cache->hidden_pre = head_.hidden().forward(f4);
  cache->hidden = relu(cache->hidden_pre);
  cache->logits = head_.output().forward(cache->hidden);
  cache->f4 = std::move(f4);
  return cache->logits;
}

void FusionModel::backward(const NativeBatch& batch, const ForwardCache& cache, const Matrix& grad_logits,
                           bool train_branches) {
  const Matrix grad_hidden = head_.output().backward(cache.hidden, grad_logits);
  const Matrix grad_hidden_pre = relu_backward(cache.hidden_pre, grad_hidden);
  const Matrix grad_f4 = head_.hidden().backward(cache.f4, grad_hidden_pre);
  if (!train_branches) return;

  const std::array<const Matrix*, 3> natives{&batch.vision, &batch.text_a, &batch.text_b};
  const std::array<Linear*, 3> projections{&vision_.projection(), &text_a_.projection(), &text_b_.projection()};
  Eigen::Index offset = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    if (!options_.branches.has(static_cast<BranchRole>(r))) {
      if (options_.zero_fill) offset += kBranchDim;
      continue;
    }
    const Matrix grad_pre = relu_backward(cache.projection_pre[r], grad_f4.middleRows(offset, kBranchDim));
    projections[r]->backward(*natives[r], grad_pre);
    offset += kBranchDim;
  }
}

Prediction FusionModel::forward(const Sample& sample, const InferenceOptions& options) const {
  return predict(logits(native_features(sample, options)).col(0));
}

Prediction forward(const Sample& sample, const FusionModel& model, const InferenceOptions& options) {
  return model.forward(sample, options);
}

}  // namespace mmhs

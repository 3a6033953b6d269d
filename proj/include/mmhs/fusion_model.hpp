#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mmhs/corpus.hpp"
#include "mmhs/features.hpp"
#include "mmhs/nn.hpp"
#include "mmhs/text_encoder.hpp"
#include "mmhs/vision_encoder.hpp"

namespace mmhs {

inline constexpr Eigen::Index kHiddenDim = 128;

// F4 = F1 || F2 || F3.
struct FusedFeature {
  Vector values;
};

// Requires roles F1, F2, F3 in that order; throws RoleMismatch otherwise.
FusedFeature fuse(const VisionFeature& f1, const TextFeature& f2, const TextFeature& f3);

// in_dim -> 128 -> ReLU -> 2. No rectifier on the logits.
class ClassificationHead {
 public:
  explicit ClassificationHead(Eigen::Index in_dim = kFusedDim);

  Eigen::Index in_dim() const { return hidden_.in_features(); }
  Linear& hidden() { return hidden_; }
  Linear& output() { return output_; }
  const Linear& hidden() const { return hidden_; }
  const Linear& output() const { return output_; }

  // Columns are samples.
  Matrix forward(const Matrix& f4) const;

 private:
  Linear hidden_;
  Linear output_;
};

Vector head_forward(const FusedFeature& f4, const ClassificationHead& head);

struct Prediction {
  std::array<double, kNumClasses> logits{};
  std::array<double, kNumClasses> probabilities{};
  Label label = Label::kNoHateSpeech;
  double confidence = 0.0;
};

// Softmax + argmax, ties resolved toward code 0 (NoHateSpeech). Throws
// NonFiniteLogits.
Prediction predict(const std::array<double, kNumClasses>& logits);
Prediction predict(const Vector& logits);

// Per-sample native (pre-projection) backbone outputs, columns = samples.
// Matrices for inactive branches are left empty.
struct NativeBatch {
  Matrix vision;
  Matrix text_a;
  Matrix text_b;

  Eigen::Index batch_size() const;
  NativeBatch select(const std::vector<std::size_t>& columns) const;
};

struct InferenceOptions {
  PreprocessConfig preprocess;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
};

struct ArchitectureInfo {
  std::string vision_identity;
  std::string text_a_identity;
  std::string text_b_identity;
  BranchMask branches;
  bool zero_fill = false;
  Eigen::Index head_in_dim = kFusedDim;

  bool operator==(const ArchitectureInfo&) const = default;
};

struct BackboneSet {
  std::shared_ptr<const VisionBackbone> vision;
  std::shared_ptr<const TextBackbone> text_a;
  std::shared_ptr<const TextBackbone> text_b;
};

// The stacked ensemble: three frozen backbones, three trainable projections
// and the classification head. Branches can be switched off for ablations;
// the head then either shrinks its input (default) or keeps 1536 inputs with
// zero-filled slots.
class FusionModel {
 public:
  struct Options {
    BranchMask branches;
    bool zero_fill = false;
  };

  struct ForwardCache {
    std::array<Matrix, kNumBranches> projection_pre;
    Matrix f4;
    Matrix hidden_pre;
    Matrix hidden;
    Matrix logits;
  };

  FusionModel(std::shared_ptr<const VisionBackbone> vision, std::shared_ptr<const TextBackbone> text_a,
              std::shared_ptr<const TextBackbone> text_b);
  FusionModel(std::shared_ptr<const VisionBackbone> vision, std::shared_ptr<const TextBackbone> text_a,
              std::shared_ptr<const TextBackbone> text_b, Options options);
  FusionModel(const BackboneSet& backbones, Options options);

  // Fan-in uniform weights, zero biases, one derived stream per layer.
  void initialize(std::uint64_t seed);

  VisionEncoder& vision() { return vision_; }
  TextEncoder& text_a() { return text_a_; }
  TextEncoder& text_b() { return text_b_; }
  ClassificationHead& head() { return head_; }
  const VisionEncoder& vision() const { return vision_; }
  const TextEncoder& text_a() const { return text_a_; }
  const TextEncoder& text_b() const { return text_b_; }
  const ClassificationHead& head() const { return head_; }
  const Options& options() const { return options_; }

  ArchitectureInfo architecture() const;

  // Trainable parameters of active branches and the head, in a stable order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> branch_parameters();
  void set_branches_trainable(bool trainable);

  // Backbone outputs for one sample (active branches only). Throws
  // MissingText if a text branch is active and the sample has no OCR text.
  NativeBatch native_features(const Sample& sample, const InferenceOptions& options) const;

  Matrix fused(const NativeBatch& batch, ForwardCache* cache = nullptr) const;
  Matrix logits(const NativeBatch& batch, ForwardCache* cache = nullptr) const;
  // Accumulates gradients into parameters. With train_branches false the
  // projections are left untouched.
  void backward(const NativeBatch& batch, const ForwardCache& cache, const Matrix& grad_logits,
                bool train_branches);

  Prediction forward(const Sample& sample, const InferenceOptions& options) const;

 private:
  Options options_;
  VisionEncoder vision_;
  TextEncoder text_a_;
  TextEncoder text_b_;
  ClassificationHead head_;
};

Prediction forward(const Sample& sample, const FusionModel& model, const InferenceOptions& options);

}  // namespace mmhs

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmhs/corpus.hpp"
#include "mmhs/fusion_model.hpp"
#include "mmhs/nn.hpp"

namespace mmhs {

struct TrainConfig {
  double learning_rate = 3e-4;
  double weight_decay = 3e-5;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  int epochs = 100;
  int batch_size = 32;
  int lr_step_size = 30;
  double lr_decay = 0.1;
  std::uint64_t seed = 0;
  // Inverse-frequency weights from the training manifest when unset.
  std::optional<std::array<double, kNumClasses>> class_weights;
  bool freeze_branches = false;

  // Throws ConfigError.
  void validate() const;
  // Key=value lines covering every field except `epochs`, so a run can be
  // resumed with a larger epoch budget.
  std::string canonical() const;
  std::uint64_t fingerprint() const;
};

// lr * decay^floor(epoch / step_size), epoch counted from 0.
double learning_rate_at(const TrainConfig& config, int epoch);

struct EpochRecord {
  int epoch = 0;  // 1-based in exported tables
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  double learning_rate = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> records;

  bool empty() const noexcept { return records.empty(); }
  std::size_t size() const noexcept { return records.size(); }
  // Header `epoch,train_loss,train_acc,val_loss,val_acc,lr`; values printed
  // with 17 significant digits so the table is an exact record.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static TrainHistory read_csv(const std::filesystem::path& path);
};

// sum_i w_{y_i} * -log softmax(z_i)_{y_i} / sum_i w_{y_i}. logits is 2 x batch.
// When grad is given it receives dLoss/dlogits.
double weighted_cross_entropy(const Matrix& logits, std::span<const Label> labels,
                              const std::array<double, kNumClasses>& weights, Matrix* grad = nullptr);

// Backbone outputs for every sample of a manifest, computed once; the
// backbones are frozen, so these stay valid for the whole run.
struct FeatureTable {
  NativeBatch native;
  std::vector<Label> labels;
  std::vector<std::string> indices;

  std::size_t size() const noexcept { return indices.size(); }
};

// Requires every sample to be labeled (UnlabeledSample) when require_labels.
FeatureTable build_feature_table(const FusionModel& model, const DatasetManifest& manifest,
                                 const InferenceOptions& options, bool require_labels = true,
                                 unsigned workers = 1);

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
};

EvalStats evaluate_table(const FusionModel& model, const FeatureTable& table,
                         const std::array<double, kNumClasses>& weights);

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint64_t config_fingerprint = 0;
  int epoch = 0;  // completed epochs
  ArchitectureInfo architecture;
  std::vector<NamedTensor> parameters;
  std::int64_t optimizer_steps = 0;
  std::vector<std::pair<NamedTensor, NamedTensor>> optimizer_moments;  // (first, second) per parameter
  std::array<double, kNumClasses> class_weights{1.0, 1.0};
  TrainHistory history;
  double best_metric = -1.0;
  int best_epoch = 0;
};

// Single binary file: magic, format version, payload length, payload,
// FNV-1a checksum of the payload. Throws CorruptCheckpoint on any mismatch.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameter values into a model; throws BackboneMismatch if the
// backbone identities differ, ShapeMismatch if the branch layout or a
// parameter shape differs.
void restore_parameters(FusionModel& model, const Checkpoint& checkpoint);

struct FitOptions {
  InferenceOptions inference;  // max_seq_len is overridden by TrainConfig
  unsigned workers = 1;
  // Called after each epoch; for logging.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  Checkpoint final_checkpoint;
  // Checkpoint at the best validation accuracy reached in this call (train
  // accuracy when no validation set is given). Empty if a resumed run never
  // beat the stored best.
  std::optional<Checkpoint> best_checkpoint;
  TrainHistory history;
};

// Trains from a fresh initialization seeded by config.seed.
FitResult fit(const TrainConfig& config, const DatasetManifest& train, const DatasetManifest& validation,
              FusionModel& model, const FitOptions& options = {});

// Continues from checkpoint.epoch up to config.epochs. Throws
// FingerprintMismatch if config differs from the one the checkpoint was
// trained with (epochs excepted).
FitResult resume(const Checkpoint& checkpoint, const TrainConfig& config, const DatasetManifest& train,
                 const DatasetManifest& validation, FusionModel& model, const FitOptions& options = {});

// Same loops on precomputed features.
FitResult fit_features(const TrainConfig& config, const FeatureTable& train, const FeatureTable& validation,
                       FusionModel& model, const std::function<void(const EpochRecord&)>& on_epoch = {});
FitResult resume_features(const Checkpoint& checkpoint, const TrainConfig& config, const FeatureTable& train,
                          const FeatureTable& validation, FusionModel& model,
                          const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace mmhs

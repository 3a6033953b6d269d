#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmhs/corpus.hpp"
#include "mmhs/fusion_model.hpp"
#include "mmhs/trainer.hpp"

namespace mmhs {

// HateSpeech is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Throws LengthMismatch, EmptyInput.
ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> labels);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, kNumClasses> per_class{};  // indexed by label code
  ConfusionMatrix matrix;
  // Ratios with a zero denominator are reported as 0; each occurrence is
  // listed here and logged.
  std::vector<std::string> warnings;
};

// Throws EmptyMatrix.
MetricReport metrics(const ConfusionMatrix& cm);

std::string metric_report_csv(const MetricReport& report);
std::string metric_report_markdown(const MetricReport& report);

// ---- ablation ----

struct AblationVariant {
  std::string name;
  BranchMask branches;
};

// text_a, text_b, vision, text_pair, ensemble.
const std::vector<AblationVariant>& known_variants();
// Throws UnknownVariant.
AblationVariant variant_by_name(const std::string& name);

struct AblationSpec {
  std::vector<std::string> variants{"text_a", "text_b", "vision", "text_pair", "ensemble"};
  // Keep the 1536-wide head and feed zeros for absent branches.
  bool zero_fill = false;
  // One thread per variant, each with its own model.
  bool parallel = false;
};

struct AblationRow {
  std::string model;
  MetricReport report;
  TrainHistory history;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& model) const;
  // `model,accuracy,f1` with values in [0, 1].
  std::string to_csv() const;
  // Percentages to two decimals.
  std::string to_markdown() const;
};

// Trains every variant from the same seed on `train` and scores its final
// weights on `eval`. The feature tables must hold all three
// native branches; each variant reads only the ones it uses. Throws
// UnknownVariant, DuplicateVariant, EmptyInput (no variants or empty eval).
AblationTable run_ablation(const AblationSpec& spec, const BackboneSet& backbones, const TrainConfig& config,
                           const FeatureTable& train, const FeatureTable& validation, const FeatureTable& eval);

// ---- plots ----

struct PlotFiles {
  std::filesystem::path accuracy_plot;
  std::filesystem::path loss_plot;
  std::filesystem::path accuracy_data;
  std::filesystem::path loss_data;
};

// Writes accuracy_vs_epoch.svg and loss_vs_epoch.svg (train and validation
// series) plus a .csv with the plotted points next to each. Throws
// EmptyHistory, UnwritableDirectory.
PlotFiles plot_history(const TrainHistory& history, const std::filesystem::path& out_dir);

// ---- empirical report ----

struct EmpiricalRow {
  std::string index;
  Label actual = Label::kNoHateSpeech;
  Label predicted = Label::kNoHateSpeech;
  double confidence = 0.0;
  std::string ocr_excerpt;

  bool correct() const noexcept { return actual == predicted; }
};

struct EmpiricalSummary {
  // Indexed by actual label code.
  std::array<std::size_t, kNumClasses> correct{};
  std::array<std::size_t, kNumClasses> incorrect{};

  std::size_t total_correct() const noexcept { return correct[0] + correct[1]; }
  std::size_t total_incorrect() const noexcept { return incorrect[0] + incorrect[1]; }
};

struct EmpiricalReport {
  std::vector<EmpiricalRow> rows;
  EmpiricalSummary summary;

  std::string to_csv() const;
  std::string to_markdown() const;
};

using Predictor = std::function<Prediction(const Sample&)>;

// First `max_code_points` UTF-8 code points of text.
std::string utf8_prefix(std::string_view text, std::size_t max_code_points);

// One row per sample, in manifest order. Throws UnlabeledSample,
// DuplicateIndex; inference errors propagate.
EmpiricalReport empirical_report(const Predictor& predictor, const DatasetManifest& samples);
EmpiricalReport empirical_report(const FusionModel& model, const DatasetManifest& samples,
                                 const InferenceOptions& options);

}  // namespace mmhs

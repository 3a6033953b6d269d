#include "mmhs/evaluator.hpp"

#include <exception>
#include <optional>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "csv.hpp"
#include "mmhs/error.hpp"

namespace mmhs {

ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(Errc::kLengthMismatch, fmt::format("{} predictions vs {} labels", predictions.size(), labels.size()));
  }
  if (labels.empty()) throw Error(Errc::kEmptyInput, "no predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_pos = predictions[i] == Label::kHateSpeech;
    const bool true_pos = labels[i] == Label::kHateSpeech;
    if (pred_pos && true_pos) ++cm.tp;
    else if (pred_pos) ++cm.fp;
    else if (true_pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den, const std::string& what, std::vector<std::string>& warnings) {
  if (den == 0) {
    warnings.push_back(what + " undefined (no samples), reported as 0");
    spdlog::warn("{}", warnings.back());
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn, Label cls,
                           std::vector<std::string>& warnings) {
  const std::string name(label_token(cls));
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp, name + " precision", warnings);
  m.recall = ratio(tp, tp + fn, name + " recall", warnings);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn, name + " F1", warnings);
  return m;
}

}  // namespace

MetricReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(Errc::kEmptyMatrix, "confusion matrix has no samples");
  MetricReport r;
  r.matrix = cm;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.per_class[label_code(Label::kHateSpeech)] = class_metrics(cm.tp, cm.fp, cm.fn, Label::kHateSpeech, r.warnings);
  r.per_class[label_code(Label::kNoHateSpeech)] = class_metrics(cm.tn, cm.fn, cm.fp, Label::kNoHateSpeech, r.warnings);
  r.macro_precision = (r.per_class[0].precision + r.per_class[1].precision) / 2.0;
  r.macro_recall = (r.per_class[0].recall + r.per_class[1].recall) / 2.0;
  r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
  return r;
}

std::string metric_report_csv(const MetricReport& r) {
  std::string out = "metric,value\n";
  auto line = [&](std::string_view k, double v) { out += fmt::format("{},{:.17g}\n", k, v); };
  line("accuracy", r.accuracy);
  line("macro_precision", r.macro_precision);
  line("macro_recall", r.macro_recall);
  line("macro_f1", r.macro_f1);
  for (Label l : {Label::kNoHateSpeech, Label::kHateSpeech}) {
    const ClassMetrics& c = r.per_class[label_code(l)];
    line(fmt::format("{}_precision", label_token(l)), c.precision);
    line(fmt::format("{}_recall", label_token(l)), c.recall);
    line(fmt::format("{}_f1", label_token(l)), c.f1);
  }
  out += fmt::format("tp,{}\nfp,{}\ntn,{}\nfn,{}\n", r.matrix.tp, r.matrix.fp, r.matrix.tn, r.matrix.fn);
  return out;
}

std::string metric_report_markdown(const MetricReport& r) {
  std::string out = "| Class | Precision | Recall | F1 |\n|---|---|---|---|\n";
  for (Label l : {Label::kHateSpeech, Label::kNoHateSpeech}) {
    const ClassMetrics& c = r.per_class[label_code(l)];
    out += fmt::format("| {} | {:.4f} | {:.4f} | {:.4f} |\n", label_display(l), c.precision, c.recall, c.f1);
  }
  out += fmt::format("| Macro average | {:.4f} | {:.4f} | {:.4f} |\n\n", r.macro_precision, r.macro_recall,
                     r.macro_f1);
  out += fmt::format("Accuracy: {:.4f} ({} of {})\n\n", r.accuracy, r.matrix.tp + r.matrix.tn, r.matrix.total());
  out += fmt::format("Confusion (positive = {}): tp={} fp={} tn={} fn={}\n", label_display(Label::kHateSpeech),
                     r.matrix.tp, r.matrix.fp, r.matrix.tn, r.matrix.fn);
  for (const auto& w : r.warnings) out += "\nwarning: " + w + "\n";
  return out;
}

const std::vector<AblationVariant>& known_variants() {
  static const std::vector<AblationVariant> variants{
      {"text_a", BranchMask{{false, true, false}}},   {"text_b", BranchMask{{false, false, true}}},
      {"vision", BranchMask{{true, false, false}}},   {"text_pair", BranchMask{{false, true, true}}},
      {"ensemble", BranchMask{{true, true, true}}},
  };
  return variants;
}

AblationVariant variant_by_name(const std::string& name) {
  for (const auto& v : known_variants()) {
    if (v.name == name) return v;
  }
  throw Error(Errc::kUnknownVariant, name);
}

const AblationRow& AblationTable::row(const std::string& model) const {
  for (const auto& r : rows) {
    if (r.model == model) return r;
  }
  throw Error(Errc::kUnknownVariant, model);
}

std::string AblationTable::to_csv() const {
  std::string out = "model,accuracy,f1\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.17g},{:.17g}\n", detail::csv_field(r.model), r.report.accuracy, r.report.macro_f1);
  }
  return out;
}

std::string AblationTable::to_markdown() const {
  std::string out = "| Model | Accuracy | F1 Score |\n|---|---|---|\n";
  for (const auto& r : rows) {
    out += fmt::format("| {} | {:.2f} | {:.2f} |\n", r.model, 100.0 * r.report.accuracy, 100.0 * r.report.macro_f1);
  }
  return out;
}

namespace {

AblationRow run_variant(const AblationVariant& variant, bool zero_fill, const BackboneSet& backbones,
                        const TrainConfig& config, const FeatureTable& train, const FeatureTable& validation,
                        const FeatureTable& eval) {
  FusionModel::Options options;
  options.branches = variant.branches;
  options.zero_fill = zero_fill;
  FusionModel model(backbones, options);
  spdlog::info("ablation: training variant {}", variant.name);
  FitResult fit = fit_features(config, train, validation, model);
  const EvalStats stats = evaluate_table(model, eval, fit.final_checkpoint.class_weights);
  std::vector<Label> predicted;
  predicted.reserve(stats.predictions.size());
  for (const auto& p : stats.predictions) predicted.push_back(p.label);
  AblationRow row;
  row.model = variant.name;
  row.report = metrics(confusion(predicted, eval.labels));
  row.history = std::move(fit.history);
  return row;
}

}  // namespace

AblationTable run_ablation(const AblationSpec& spec, const BackboneSet& backbones, const TrainConfig& config,
                           const FeatureTable& train, const FeatureTable& validation, const FeatureTable& eval) {
  if (spec.variants.empty()) throw Error(Errc::kEmptyInput, "no ablation variants");
  if (eval.size() == 0) throw Error(Errc::kEmptyInput, "empty evaluation set");
  config.validate();
  std::vector<AblationVariant> variants;
  std::set<std::string> seen;
  for (const auto& name : spec.variants) {
    if (!seen.insert(name).second) throw Error(Errc::kDuplicateVariant, name);
    variants.push_back(variant_by_name(name));
  }

  AblationTable table;
  table.rows.resize(variants.size());
  if (!spec.parallel) {
    for (std::size_t i = 0; i < variants.size(); ++i) {
      table.rows[i] = run_variant(variants[i], spec.zero_fill, backbones, config, train, validation, eval);
    }
    return table;
  }

  std::vector<std::exception_ptr> errors(variants.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          table.rows[i] = run_variant(variants[i], spec.zero_fill, backbones, config, train, validation, eval);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return table;
}

std::string utf8_prefix(std::string_view text, std::size_t max_code_points) {
  std::size_t i = 0;
  std::size_t count = 0;
  while (i < text.size() && count < max_code_points) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    std::size_t j = i + 1;
    while (j < text.size() && j < i + len && (static_cast<unsigned char>(text[j]) & 0xC0) == 0x80) ++j;
    i = j;
    ++count;
  }
  return std::string(text.substr(0, i));
}

EmpiricalReport empirical_report(const Predictor& predictor, const DatasetManifest& samples) {
  EmpiricalReport report;
  std::set<std::string> seen;
  for (const Sample& s : samples.samples) {
    if (!s.label) throw Error(Errc::kUnlabeledSample, s.index);
    if (!seen.insert(s.index).second) throw Error(Errc::kDuplicateIndex, s.index);
    const Prediction p = predictor(s);
    EmpiricalRow row;
    row.index = s.index;
    row.actual = *s.label;
    row.predicted = p.label;
    row.confidence = p.confidence;
    row.ocr_excerpt = utf8_prefix(s.ocr_text.value_or(""), 120);
    auto& bucket = row.correct() ? report.summary.correct : report.summary.incorrect;
    ++bucket[label_code(row.actual)];
    report.rows.push_back(std::move(row));
  }
  return report;
}

EmpiricalReport empirical_report(const FusionModel& model, const DatasetManifest& samples,
                                 const InferenceOptions& options) {
  return empirical_report([&](const Sample& s) { return model.forward(s, options); }, samples);
}

std::string EmpiricalReport::to_csv() const {
  std::string out = "index,actual,predicted,confidence,ocr_excerpt\n";
  for (const auto& r : rows) {
    out += detail::join_csv({r.index, std::string(label_token(r.actual)), std::string(label_token(r.predicted)),
                             fmt::format("{:.6f}", r.confidence), r.ocr_excerpt});
    out += '\n';
  }
  return out;
}

namespace {

std::string markdown_cell(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '|') out += "\\|";
    else if (c == '\n' || c == '\r') out += ' ';
    else out += c;
  }
  return out;
}

}  // namespace

std::string EmpiricalReport::to_markdown() const {
  std::string out = "| Instance | Actual Label | Predicted Label | Confidence | OCR text |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += fmt::format("| {} | {} | {} | {:.3f} | {} |\n", markdown_cell(r.index), label_display(r.actual),
                       label_display(r.predicted), r.confidence, markdown_cell(r.ocr_excerpt));
  }
  out += "\n| Actual Label | Correct | Incorrect |\n|---|---|---|\n";
  for (Label l : {Label::kHateSpeech, Label::kNoHateSpeech}) {
    out += fmt::format("| {} | {} | {} |\n", label_display(l), summary.correct[label_code(l)],
                       summary.incorrect[label_code(l)]);
  }
  out += fmt::format("| Total | {} | {} |\n", summary.total_correct(), summary.total_incorrect());
  return out;
}

}  // namespace mmhs

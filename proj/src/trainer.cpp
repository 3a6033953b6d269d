#include "mmhs/trainer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "csv.hpp"
#include "mmhs/error.hpp"
#include "mmhs/optimizer.hpp"
#include "mmhs/rng.hpp"
#include "mmhs/tokenizer.hpp"

namespace mmhs {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::kConfigError, what);
  };
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(weight_decay > 0.0 && std::isfinite(weight_decay), "weight_decay must be positive");
  require(lr_decay > 0.0 && std::isfinite(lr_decay), "lr_decay must be positive");
  require(lr_step_size >= 1, "lr_step_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_seq_len >= SpecialTokens::kCount, "max_seq_len must hold the special tokens");
  if (class_weights) {
    for (double w : *class_weights) require(w > 0.0 && std::isfinite(w), "class weights must be positive");
  }
}

std::string TrainConfig::canonical() const {
  std::string out;
  out += fmt::format("learning_rate={:.17g}\n", learning_rate);
  out += fmt::format("weight_decay={:.17g}\n", weight_decay);
  out += fmt::format("max_seq_len={}\n", max_seq_len);
  out += fmt::format("batch_size={}\n", batch_size);
  out += fmt::format("lr_step_size={}\n", lr_step_size);
  out += fmt::format("lr_decay={:.17g}\n", lr_decay);
  out += fmt::format("seed={}\n", seed);
  if (class_weights) {
    out += fmt::format("class_weights={:.17g},{:.17g}\n", (*class_weights)[0], (*class_weights)[1]);
  } else {
    out += "class_weights=auto\n";
  }
  out += fmt::format("freeze_branches={}\n", freeze_branches);
  return out;
}

std::uint64_t TrainConfig::fingerprint() const { return fnv1a64(canonical()); }

double learning_rate_at(const TrainConfig& config, int epoch) {
  return config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_step_size));
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
  for (const auto& r : records) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.train_loss, r.train_accuracy,
                       r.validation_loss, r.validation_accuracy, r.learning_rate);
  }
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << to_csv();
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
}

TrainHistory TrainHistory::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kMissingFile, path.string());
  TrainHistory h;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw Error(Errc::kMalformedRow, std::to_string(line_no));
    try {
      h.records.push_back(EpochRecord{std::stoi(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                                      std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw Error(Errc::kMalformedRow, std::to_string(line_no));
    }
  }
  return h;
}

double weighted_cross_entropy(const Matrix& logits, std::span<const Label> labels,
                              const std::array<double, kNumClasses>& weights, Matrix* grad) {
  if (labels.empty() || logits.cols() == 0) throw Error(Errc::kEmptyBatch, "no samples");
  if (logits.rows() != static_cast<Eigen::Index>(kNumClasses)) {
    throw Error(Errc::kShapeMismatch, fmt::format("logits have {} rows", logits.rows()));
  }
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) {
    throw Error(Errc::kLengthMismatch, fmt::format("{} logits for {} labels", logits.cols(), labels.size()));
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(Errc::kConfigError, "class weights must be positive");
  }
  if (!logits.allFinite()) throw Error(Errc::kNonFiniteLogits, "non-finite logits in batch");

  double numerator = 0.0;
  double total_weight = 0.0;
  if (grad != nullptr) grad->resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const int y = label_code(labels[static_cast<std::size_t>(i)]);
    const double m = logits.col(i).maxCoeff();
    const double e0 = std::exp(logits(0, i) - m);
    const double e1 = std::exp(logits(1, i) - m);
    const double log_z = m + std::log(e0 + e1);
    const double w = weights[static_cast<std::size_t>(y)];
    numerator += w * (log_z - logits(y, i));
    total_weight += w;
    if (grad != nullptr) {
      (*grad)(0, i) = w * (e0 / (e0 + e1) - (y == 0 ? 1.0 : 0.0));
      (*grad)(1, i) = w * (e1 / (e0 + e1) - (y == 1 ? 1.0 : 0.0));
    }
  }
  if (grad != nullptr) *grad /= total_weight;
  return numerator / total_weight;
}

FeatureTable build_feature_table(const FusionModel& model, const DatasetManifest& manifest,
                                 const InferenceOptions& options, bool require_labels, unsigned workers) {
  const std::size_t n = manifest.size();
  FeatureTable table;
  table.indices.reserve(n);
  for (const auto& s : manifest.samples) {
    if (require_labels && !s.label) throw Error(Errc::kUnlabeledSample, s.index);
    table.indices.push_back(s.index);
    table.labels.push_back(s.label.value_or(Label::kNoHateSpeech));
  }

  std::vector<NativeBatch> rows(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        rows[i] = model.native_features(manifest.samples[i], options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned pool = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (pool <= 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    for (unsigned t = 0; t < pool; ++t) threads.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto gather = [&](Matrix NativeBatch::*member) {
    Matrix out;
    if (n == 0 || (rows[0].*member).size() == 0) return out;
    out.resize((rows[0].*member).rows(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = (rows[i].*member).col(0);
    return out;
  };
  table.native.vision = gather(&NativeBatch::vision);
  table.native.text_a = gather(&NativeBatch::text_a);
  table.native.text_b = gather(&NativeBatch::text_b);
  return table;
}

EvalStats evaluate_table(const FusionModel& model, const FeatureTable& table,
                         const std::array<double, kNumClasses>& weights) {
  EvalStats stats;
  if (table.size() == 0) {
    stats.loss = std::numeric_limits<double>::quiet_NaN();
    stats.accuracy = std::numeric_limits<double>::quiet_NaN();
    return stats;
  }
  const Matrix logits = model.logits(table.native);
  stats.loss = weighted_cross_entropy(logits, table.labels, weights);
  std::size_t correct = 0;
  stats.predictions.reserve(table.size());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    stats.predictions.push_back(predict(logits.col(i)));
    if (stats.predictions.back().label == table.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(table.size());
  return stats;
}

namespace {

Checkpoint capture(const FusionModel& model, const Adam& adam, const TrainConfig& config, int epoch,
                   const std::array<double, kNumClasses>& weights, const TrainHistory& history,
                   double best_metric, int best_epoch) {
  Checkpoint ck;
  ck.config_fingerprint = config.fingerprint();
  ck.epoch = epoch;
  ck.architecture = model.architecture();
  for (const Parameter* p : model.parameters()) ck.parameters.push_back({p->name, p->value});
  ck.optimizer_steps = adam.step_count();
  for (const auto& [name, m] : adam.moments()) {
    ck.optimizer_moments.push_back({NamedTensor{name, m.first}, NamedTensor{name, m.second}});
  }
  ck.class_weights = weights;
  ck.history = history;
  ck.best_metric = best_metric;
  ck.best_epoch = best_epoch;
  return ck;
}

struct LoopState {
  Adam adam;
  TrainHistory history;
  std::array<double, kNumClasses> weights{};
  double best_metric = -1.0;
  int best_epoch = 0;
  int start_epoch = 0;
};

FitResult run_epochs(const TrainConfig& config, const FeatureTable& train, const FeatureTable& validation,
                     FusionModel& model, LoopState state, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.size() == 0) throw Error(Errc::kEmptyManifest, "training set is empty");
  model.set_branches_trainable(!config.freeze_branches);
  const std::vector<Parameter*> params =
      config.freeze_branches ? [&] {
        std::vector<Parameter*> head;
        model.head().hidden().collect(head);
        model.head().output().collect(head);
        return head;
      }()
                             : model.parameters();

  FitResult result;
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = state.start_epoch; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));

    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_no) {
      const std::vector<std::size_t> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
      const NativeBatch native = train.native.select(cols);
      std::vector<Label> labels;
      labels.reserve(cols.size());
      for (std::size_t c : cols) labels.push_back(train.labels[c]);

      FusionModel::ForwardCache cache;
      model.logits(native, &cache);
      double loss = 0.0;
      Matrix grad;
      try {
        loss = weighted_cross_entropy(cache.logits, labels, state.weights, &grad);
      } catch (const Error& e) {
        if (e.code() != Errc::kNonFiniteLogits) throw;
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        throw Error(Errc::kNonFiniteLoss, fmt::format("epoch {} batch {}", epoch + 1, batch_no));
      }
      zero_grads(params);
      model.backward(native, cache, grad, !config.freeze_branches);
      state.adam.step(params, lr);
    }

    const EvalStats on_train = evaluate_table(model, train, state.weights);
    const EvalStats on_val = evaluate_table(model, validation, state.weights);
    EpochRecord record{epoch + 1, on_train.loss, on_train.accuracy, on_val.loss, on_val.accuracy, lr};
    state.history.records.push_back(record);
    if (on_epoch) on_epoch(record);

    const double metric = validation.size() > 0 ? on_val.accuracy : on_train.accuracy;
    if (metric > state.best_metric) {
      state.best_metric = metric;
      state.best_epoch = epoch + 1;
      result.best_checkpoint = capture(model, state.adam, config, epoch + 1, state.weights, state.history,
                                       state.best_metric, state.best_epoch);
    }
  }

  result.history = state.history;
  result.final_checkpoint = capture(model, state.adam, config, std::max(config.epochs, state.start_epoch),
                                    state.weights, state.history, state.best_metric, state.best_epoch);
  return result;
}

std::array<double, kNumClasses> resolve_weights(const TrainConfig& config, const FeatureTable& train) {
  if (config.class_weights) return *config.class_weights;
  std::array<std::size_t, kNumClasses> counts{};
  for (Label l : train.labels) ++counts[label_code(l)];
  return class_stats_from_counts(counts).weights;
}

}  // namespace

FitResult fit_features(const TrainConfig& config, const FeatureTable& train, const FeatureTable& validation,
                       FusionModel& model, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  model.initialize(config.seed);
  LoopState state;
  state.adam = Adam(AdamOptions{0.9, 0.999, 1e-8, config.weight_decay});
  state.weights = resolve_weights(config, train);
  return run_epochs(config, train, validation, model, std::move(state), on_epoch);
}

FitResult resume_features(const Checkpoint& checkpoint, const TrainConfig& config, const FeatureTable& train,
                          const FeatureTable& validation, FusionModel& model,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (checkpoint.config_fingerprint != config.fingerprint()) {
    throw Error(Errc::kFingerprintMismatch,
                fmt::format("checkpoint {:016x} vs config {:016x}", checkpoint.config_fingerprint,
                            config.fingerprint()));
  }
  restore_parameters(model, checkpoint);
  LoopState state;
  state.adam = Adam(AdamOptions{0.9, 0.999, 1e-8, config.weight_decay});
  std::map<std::string, AdamMoments> moments;
  for (const auto& [first, second] : checkpoint.optimizer_moments) {
    moments[first.name] = AdamMoments{first.value, second.value};
  }
  state.adam.restore(checkpoint.optimizer_steps, std::move(moments));
  state.history = checkpoint.history;
  state.weights = checkpoint.class_weights;
  state.best_metric = checkpoint.best_metric;
  state.best_epoch = checkpoint.best_epoch;
  state.start_epoch = checkpoint.epoch;
  return run_epochs(config, train, validation, model, std::move(state), on_epoch);
}

FitResult fit(const TrainConfig& config, const DatasetManifest& train, const DatasetManifest& validation,
              FusionModel& model, const FitOptions& options) {
  config.validate();
  InferenceOptions inference = options.inference;
  inference.max_seq_len = config.max_seq_len;
  const FeatureTable train_table = build_feature_table(model, train, inference, true, options.workers);
  const FeatureTable val_table = build_feature_table(model, validation, inference, true, options.workers);
  return fit_features(config, train_table, val_table, model, options.on_epoch);
}

FitResult resume(const Checkpoint& checkpoint, const TrainConfig& config, const DatasetManifest& train,
                 const DatasetManifest& validation, FusionModel& model, const FitOptions& options) {
  config.validate();
  InferenceOptions inference = options.inference;
  inference.max_seq_len = config.max_seq_len;
  const FeatureTable train_table = build_feature_table(model, train, inference, true, options.workers);
  const FeatureTable val_table = build_feature_table(model, validation, inference, true, options.workers);
  return resume_features(checkpoint, config, train_table, val_table, model, options.on_epoch);
}

}  // namespace mmhs

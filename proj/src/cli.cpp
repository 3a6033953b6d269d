#include "mmhs/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mmhs/error.hpp"
#include "mmhs/evaluator.hpp"
#include "mmhs/ocr_client.hpp"
#include "mmhs/run_config.hpp"
#include "mmhs/trainer.hpp"

namespace mmhs {
namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
};

struct Datasets {
  DatasetManifest train;
  DatasetManifest validation;
  DatasetManifest test;
};

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
}

DatasetManifest load_optional(const fs::path& path, SplitTag tag, const LoadOptions& options) {
  if (path.empty()) {
    DatasetManifest m;
    m.split_tag = tag;
    return m;
  }
  return load_manifest(path, tag, options);
}

Datasets load_datasets(const RunConfig& config, bool check_images) {
  LoadOptions options;
  options.check_images = check_images;
  if (!config.image_root.empty()) options.image_root = config.image_root;
  Datasets d;
  d.train = load_optional(config.train_manifest, SplitTag::kTrain, options);
  d.validation = load_optional(config.validation_manifest, SplitTag::kValidation, options);
  d.test = load_optional(config.test_manifest, SplitTag::kTest, options);
  if (config.split) {
    ManifestSplits s = split_manifest(d.train, *config.split, config.train.seed);
    d.train = std::move(s.train);
    d.validation = std::move(s.validation);
    d.test = std::move(s.test);
  }
  return d;
}

std::string list_failures(const IngestSummary& s) {
  std::string out;
  for (const auto& [index, message] : s.failures) out += fmt::format("  {}: {}\n", index, message);
  return out;
}

// Fills ocr_text from the cache, extracting misses when auto_ingest is on.
void resolve_text(DatasetManifest& m, OcrCache& cache, const OcrEngine& engine, const RunConfig& config) {
  if (m.empty()) return;
  if (config.auto_ingest) {
    const IngestSummary s = ingest(m, cache, engine, static_cast<unsigned>(config.ocr_workers));
    if (s.errors > 0) {
      throw Error(Errc::kEngineFailure, fmt::format("OCR failed for {} sample(s):\n{}", s.errors, list_failures(s)));
    }
    return;
  }
  std::vector<std::string> missing;
  for (auto& sample : m.samples) {
    sample.ocr_text = cache.lookup(sample.index, engine.engine_id());
    if (!sample.ocr_text) missing.push_back(sample.index);
  }
  if (!missing.empty()) {
    throw Error(Errc::kMissingText, fmt::format("{} sample(s) have no cached OCR text (first: {}); run ingest or set "
                                                "ocr.auto_ingest = true",
                                                missing.size(), missing.front()));
  }
}

FusionModel model_from_checkpoint(const RunConfig& config, const Checkpoint& ck) {
  if (ck.config_fingerprint != config.train.fingerprint()) {
    throw Error(Errc::kFingerprintMismatch, fmt::format("checkpoint {:016x} vs config {:016x}", ck.config_fingerprint,
                                                        config.train.fingerprint()));
  }
  FusionModel model(make_backbones(config), {ck.architecture.branches, ck.architecture.zero_fill});
  restore_parameters(model, ck);
  return model;
}

int cmd_ingest(const RunConfig& config, const fs::path& run_dir, Datasets& d, const OcrEngine& engine,
               std::ostream& out, std::ostream& err) {
  OcrCache cache(config.ocr_cache_path());
  IngestSummary total;
  for (DatasetManifest* m : {&d.train, &d.validation, &d.test}) {
    const IngestSummary s = ingest(*m, cache, engine, static_cast<unsigned>(config.ocr_workers));
    total.hits += s.hits;
    total.misses += s.misses;
    total.errors += s.errors;
    total.failures.insert(total.failures.end(), s.failures.begin(), s.failures.end());
  }
  const std::string line = fmt::format("hits={} misses={} errors={} engine_calls={}", total.hits, total.misses,
                                       total.errors, engine.invocations());
  write_file(run_dir / "ingest_summary.txt", line + "\n" + list_failures(total));
  out << "ingest: " << line << "\n";
  if (total.errors > 0) {
    err << "unreadable or failed samples:\n" << list_failures(total);
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_train(const RunConfig& config, const fs::path& run_dir, const Datasets& d, std::ostream& out) {
  FusionModel model(make_backbones(config), {});
  FitOptions options;
  options.inference = config.inference();
  options.workers = static_cast<unsigned>(config.workers);
  options.on_epoch = [](const EpochRecord& r) {
    spdlog::info("epoch {} loss {:.6f} acc {:.4f} val_loss {:.6f} val_acc {:.4f} lr {:g}", r.epoch, r.train_loss,
                 r.train_accuracy, r.validation_loss, r.validation_accuracy, r.learning_rate);
  };
  const FitResult result = fit(config.train, d.train, d.validation, model, options);
  save_checkpoint(result.final_checkpoint, run_dir / "checkpoint_final.bin");
  save_checkpoint(result.best_checkpoint ? *result.best_checkpoint : result.final_checkpoint,
                  run_dir / "checkpoint_best.bin");
  result.history.write_csv(run_dir / "history.csv");
  plot_history(result.history, run_dir);
  const EpochRecord& last = result.history.records.back();
  out << fmt::format("train: {} epochs, final train_acc={:.4f} train_loss={:.6f}, best epoch {}\n",
                     result.history.size(), last.train_accuracy, last.train_loss, result.final_checkpoint.best_epoch);
  return kExitOk;
}

int cmd_evaluate(const RunConfig& config, const fs::path& run_dir, const Datasets& d, const Checkpoint& ck,
                 std::ostream& out) {
  const FusionModel model = model_from_checkpoint(config, ck);
  const FeatureTable table = build_feature_table(model, d.test, config.inference(), true,
                                                 static_cast<unsigned>(config.workers));
  const EvalStats stats = evaluate_table(model, table, ck.class_weights);
  std::vector<Label> predicted;
  for (const auto& p : stats.predictions) predicted.push_back(p.label);
  const MetricReport report = metrics(confusion(predicted, table.labels));
  write_file(run_dir / "metrics.csv", metric_report_csv(report));
  write_file(run_dir / "metrics.md", metric_report_markdown(report));
  out << fmt::format("evaluate: {} samples, accuracy={:.4f} macro_f1={:.4f}\n", table.size(), report.accuracy,
                     report.macro_f1);
  return kExitOk;
}

int cmd_report(const RunConfig& config, const fs::path& run_dir, const Datasets& d, const Checkpoint& ck,
               std::ostream& out) {
  const FusionModel model = model_from_checkpoint(config, ck);
  const EmpiricalReport report = empirical_report(model, d.test, config.inference());
  write_file(run_dir / "empirical.csv", report.to_csv());
  write_file(run_dir / "empirical.md", report.to_markdown());
  out << fmt::format("report: correct={} incorrect={}\n", report.summary.total_correct(), report.summary.total_incorrect());
  return kExitOk;
}

int cmd_ablate(const RunConfig& config, const fs::path& run_dir, const Datasets& d, std::ostream& out) {
  const BackboneSet backbones = make_backbones(config);
  const FusionModel extractor(backbones, {});
  const auto inference = config.inference();
  const auto workers = static_cast<unsigned>(config.workers);
  const FeatureTable train = build_feature_table(extractor, d.train, inference, true, workers);
  const FeatureTable validation = build_feature_table(extractor, d.validation, inference, true, workers);
  const DatasetManifest& eval_set = !d.test.empty() ? d.test : !d.validation.empty() ? d.validation : d.train;
  const std::string eval_name = !d.test.empty() ? "test" : !d.validation.empty() ? "validation" : "train";
  const FeatureTable eval = &eval_set == &d.train          ? train
                            : &eval_set == &d.validation ? validation
                                                         : build_feature_table(extractor, eval_set, inference, true,
                                                                               workers);
  const AblationTable table = run_ablation(config.ablation, backbones, config.train, train, validation, eval);
  write_file(run_dir / "ablation.csv", table.to_csv());
  write_file(run_dir / "ablation.md", table.to_markdown());
  out << fmt::format("ablate: {} variants scored on the {} set ({} samples)\n", table.rows.size(), eval_name,
                     eval.size());
  out << table.to_markdown();
  return kExitOk;
}

int execute(const std::string& name, Command command, const Flags& flags, std::ostream& out, std::ostream& err) {
  RunConfig config;
  Datasets data;
  std::unique_ptr<OcrEngine> engine;
  std::optional<Checkpoint> checkpoint;
  // Everything up to here reads only.
  try {
    config = load_run_config(flags.config);
    if (!flags.out.empty()) config.output_dir = fs::absolute(flags.out).lexically_normal();
    if (flags.seed) config.train.seed = *flags.seed;
    if (!flags.checkpoint.empty()) config.checkpoint = fs::absolute(flags.checkpoint).lexically_normal();
    validate_run_config(config, command);
  } catch (const Error& e) {
    err << "invalid config: " << e.detail() << "\n";
    return kExitUsage;
  }
  try {
    data = load_datasets(config, command != Command::kIngest);
    if (command == Command::kEvaluate || command == Command::kReport) checkpoint = load_checkpoint(config.checkpoint);
    engine = make_ocr_engine(config);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitFailure;
  }

  fs::path run_dir;
  try {
    run_dir = make_run_dir(config.output_dir, name);
    write_file(run_dir / "config.txt", render_run_config(config));
    out << "run directory: " << run_dir.string() << "\n";
    if (command == Command::kIngest) return cmd_ingest(config, run_dir, data, *engine, out, err);

    OcrCache cache(config.ocr_cache_path());
    for (DatasetManifest* m : {&data.train, &data.validation, &data.test}) resolve_text(*m, cache, *engine, config);
    switch (command) {
      case Command::kTrain: return cmd_train(config, run_dir, data, out);
      case Command::kEvaluate: return cmd_evaluate(config, run_dir, data, *checkpoint, out);
      case Command::kReport: return cmd_report(config, run_dir, data, *checkpoint, out);
      case Command::kAblate: return cmd_ablate(config, run_dir, data, out);
      case Command::kIngest: break;
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitFailure;
}

}  // namespace

fs::path make_run_dir(const fs::path& base, const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  std::error_code ec;
  fs::create_directories(base, ec);
  if (ec) throw Error(Errc::kUnwritableDirectory, fmt::format("{}: {}", base.string(), ec.message()));
  for (int k = 0;; ++k) {
    const fs::path dir = base / (k == 0 ? fmt::format("{}-{}", command, stamp) : fmt::format("{}-{}-{}", command, stamp, k));
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw Error(Errc::kUnwritableDirectory, fmt::format("{}: {}", dir.string(), ec.message()));
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal hate speech classifier: OCR ingestion, training, evaluation, ablation"};
  app.name(args.empty() ? "mmhs" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  Flags flags;
  struct Sub {
    const char* name;
    Command command;
    const char* help;
  };
  const Sub subs[] = {
      {"ingest", Command::kIngest, "Run OCR over every manifest and fill the cache"},
      {"train", Command::kTrain, "Train the ensemble; writes checkpoints, history.csv and plots"},
      {"evaluate", Command::kEvaluate, "Score a checkpoint on data.test_manifest"},
      {"ablate", Command::kAblate, "Train and score each configured branch subset"},
      {"report", Command::kReport, "Per-sample actual/predicted table for data.test_manifest"},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> commands;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", flags.config, "Run config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output base directory (overrides output.dir)");
    sub->add_option("--seed", flags.seed, "Seed (overrides train.seed)");
    if (s.command == Command::kEvaluate || s.command == Command::kReport) {
      sub->add_option("--checkpoint", flags.checkpoint, "Checkpoint file (overrides eval.checkpoint)");
    }
    commands.emplace_back(sub, &s);
  }
  CLI::App* version = app.add_subcommand("version", "Print the version");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (version->parsed()) {
    out << "mmhs " << kVersion << "\n";
    return kExitOk;
  }
  for (const auto& [sub, s] : commands) {
    if (sub->parsed()) return execute(s->name, s->command, flags, out, err);
  }
  return kExitUsage;
}

}  // namespace mmhs

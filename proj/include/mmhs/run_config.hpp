#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmhs/corpus.hpp"
#include "mmhs/evaluator.hpp"
#include "mmhs/fusion_model.hpp"
#include "mmhs/ocr_client.hpp"
#include "mmhs/trainer.hpp"

namespace mmhs {

// Overrides cache.root when set.
inline constexpr const char* kCacheRootEnv = "MMHS_CACHE_ROOT";

enum class BackboneKind { kStub, kReal };

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kStub;
  std::filesystem::path weights;  // required for kReal
  std::uint64_t seed = 0;         // stub only
  PoolingRule pooling = PoolingRule::kMean;
};

enum class OcrEngineKind { kTesseract, kSidecar, kCommand };

// Everything one run needs. Relative paths in the file are resolved against
// the directory holding the config file. See docs/config.md.
struct RunConfig {
  std::filesystem::path train_manifest;
  std::filesystem::path validation_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path image_root;
  // When set, train_manifest is split (stratified, seeded by train.seed) and
  // the other two manifests must be empty.
  std::optional<SplitFractions> split;

  OcrEngineKind ocr_engine = OcrEngineKind::kTesseract;
  std::vector<std::string> ocr_command;  // kCommand; kTesseract uses the bundled script when empty
  int ocr_timeout_seconds = 30;
  int ocr_workers = 1;
  bool auto_ingest = true;

  std::filesystem::path cache_root = ".mmhs-cache";

  BackboneSpec vision{BackboneKind::kStub, {}, 17, PoolingRule::kMean};
  BackboneSpec text_a{BackboneKind::kStub, {}, 23, PoolingRule::kMean};
  BackboneSpec text_b{BackboneKind::kStub, {}, 29, PoolingRule::kMean};
  PreprocessConfig preprocess;

  TrainConfig train;
  int workers = 1;

  AblationSpec ablation;

  std::filesystem::path output_dir = "runs";
  std::filesystem::path checkpoint;  // evaluate / report

  std::filesystem::path ocr_cache_path() const { return cache_root / "ocr.jsonl"; }
  InferenceOptions inference() const { return {preprocess, train.max_seq_len}; }
};

// Throws ConfigError("line N: ...") on syntax errors, unknown or repeated
// keys and unparsable values.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir);
// Reads the file, parses it, then applies the cache-root environment override.
RunConfig load_run_config(const std::filesystem::path& path);

// Every key with its effective value, in the documented order. Parsing the
// output gives back the same config.
std::string render_run_config(const RunConfig& config);

enum class Command { kIngest, kTrain, kEvaluate, kAblate, kReport };

// Checks value ranges and that every input the command reads exists. Touches
// nothing on disk. Throws ConfigError.
void validate_run_config(const RunConfig& config, Command command);

// Throws ConfigError for real backbones: this build has no inference runtime
// for pretrained weights.
BackboneSet make_backbones(const RunConfig& config);

// Throws EngineUnavailable.
std::unique_ptr<OcrEngine> make_ocr_engine(const RunConfig& config);

}  // namespace mmhs

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmhs {

// Integer codes are fixed; on disk labels are always written by name.
enum class Label : int { kNoHateSpeech = 0, kHateSpeech = 1 };

inline constexpr std::size_t kNumClasses = 2;

constexpr int label_code(Label l) noexcept { return static_cast<int>(l); }
Label label_from_code(int code);
// "hate" / "no_hate"
std::string_view label_token(Label l) noexcept;
// "Hate Speech" / "No Hate Speech"
std::string_view label_display(Label l) noexcept;
// Case-insensitive "hate" / "no_hate"; nullopt for anything else.
std::optional<Label> parse_label(std::string_view text);

struct Sample {
  std::string index;
  std::string image_path;               // as written in the manifest
  std::filesystem::path resolved_path;  // image_path resolved against the manifest directory
  std::optional<Label> label;
  std::optional<std::string> ocr_text;  // normalized; filled from the OCR cache
};

enum class SplitTag { kTrain, kValidation, kTest, kCustom };

std::string_view split_tag_name(SplitTag tag) noexcept;
SplitTag parse_split_tag(std::string_view text);

struct DatasetManifest {
  std::vector<Sample> samples;
  SplitTag split_tag = SplitTag::kCustom;
  bool has_label_column = true;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

struct ClassStats {
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> weights{};

  std::size_t count(Label l) const { return counts[label_code(l)]; }
  double weight(Label l) const { return weights[label_code(l)]; }
};

struct LoadOptions {
  // Reject rows whose image file is missing or has no known image signature.
  bool check_images = true;
  // Relative image paths resolve against this directory instead of the
  // manifest's own directory when set.
  std::optional<std::filesystem::path> image_root;
};

DatasetManifest load_manifest(const std::filesystem::path& path, SplitTag split_tag,
                              const LoadOptions& options = {});

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Inverse-frequency weights w_c = N / (K * n_c).
ClassStats class_stats(const DatasetManifest& manifest);
ClassStats class_stats_from_counts(const std::array<std::size_t, kNumClasses>& counts);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct ManifestSplits {
  DatasetManifest train;
  DatasetManifest validation;
  DatasetManifest test;
};

// Stratified by label (unlabeled samples form their own stratum). Within
// each output the parent's order is preserved.
ManifestSplits split_manifest(const DatasetManifest& manifest, const SplitFractions& fractions,
                              std::uint64_t seed);

// True when the file exists and starts with a signature some decoder accepts.
bool is_decodable_image(const std::filesystem::path& path);

}  // namespace mmhs

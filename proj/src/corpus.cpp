#include "mmhs/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>

#include "csv.hpp"
#include "mmhs/error.hpp"
#include "mmhs/rng.hpp"

namespace mmhs {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Label label_from_code(int code) {
  if (code == 0) return Label::kNoHateSpeech;
  if (code == 1) return Label::kHateSpeech;
  throw Error(Errc::kConfigError, "label code out of range: " + std::to_string(code));
}

std::string_view label_token(Label l) noexcept {
  return l == Label::kHateSpeech ? "hate" : "no_hate";
}

std::string_view label_display(Label l) noexcept {
  return l == Label::kHateSpeech ? "Hate Speech" : "No Hate Speech";
}

std::optional<Label> parse_label(std::string_view text) {
  const std::string t = lower(trim(text));
  if (t == "hate") return Label::kHateSpeech;
  if (t == "no_hate") return Label::kNoHateSpeech;
  return std::nullopt;
}

std::string_view split_tag_name(SplitTag tag) noexcept {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kValidation: return "validation";
    case SplitTag::kTest: return "test";
    case SplitTag::kCustom: return "custom";
  }
  return "custom";
}

SplitTag parse_split_tag(std::string_view text) {
  const std::string t = lower(trim(text));
  if (t == "train") return SplitTag::kTrain;
  if (t == "validation" || t == "val") return SplitTag::kValidation;
  if (t == "test") return SplitTag::kTest;
  if (t == "custom") return SplitTag::kCustom;
  throw Error(Errc::kConfigError, "unknown split tag '" + std::string(text) + "'");
}

bool is_decodable_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return false;
  try {
    return cv::haveImageReader(path.string());
  } catch (const cv::Exception&) {
    return false;
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path, SplitTag split_tag,
                              const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!std::filesystem::is_regular_file(path) || !in) {
    throw Error(Errc::kMissingFile, path.string());
  }
  const std::filesystem::path base = options.image_root ? *options.image_root : path.parent_path();

  DatasetManifest manifest;
  manifest.split_tag = split_tag;

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_set<std::string> seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;

    bool ok = true;
    std::vector<std::string> fields = detail::split_csv_line(line, &ok);
    if (!ok) throw Error(Errc::kMalformedRow, std::to_string(line_no));

    if (!have_header) {
      std::vector<std::string> names;
      for (const auto& f : fields) names.push_back(lower(trim(f)));
      if (names == std::vector<std::string>{"index", "image_path", "label"}) {
        manifest.has_label_column = true;
      } else if (names == std::vector<std::string>{"index", "image_path"}) {
        manifest.has_label_column = false;
      } else {
        throw Error(Errc::kMalformedRow, std::to_string(line_no));
      }
      have_header = true;
      continue;
    }

    const std::size_t expected = manifest.has_label_column ? 3 : 2;
    if (fields.size() != expected) throw Error(Errc::kMalformedRow, std::to_string(line_no));

    Sample s;
    s.index = std::string(trim(fields[0]));
    s.image_path = std::string(trim(fields[1]));
    if (s.index.empty() || s.image_path.empty()) {
      throw Error(Errc::kMalformedRow, std::to_string(line_no));
    }
    if (manifest.has_label_column && !trim(fields[2]).empty()) {
      s.label = parse_label(fields[2]);
      if (!s.label) throw Error(Errc::kMalformedRow, std::to_string(line_no));
    }
    if (!seen.insert(s.index).second) throw Error(Errc::kDuplicateIndex, s.index);

    const std::filesystem::path p(s.image_path);
    s.resolved_path = p.is_absolute() ? p : (base / p).lexically_normal();
    if (options.check_images && !is_decodable_image(s.resolved_path)) {
      throw Error(Errc::kUnreadableImage, s.index);
    }
    manifest.samples.push_back(std::move(s));
  }
  if (!have_header) throw Error(Errc::kMalformedRow, "1");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
  out << (manifest.has_label_column ? "index,image_path,label\n" : "index,image_path\n");
  for (const auto& s : manifest.samples) {
    std::vector<std::string> fields{s.index, s.image_path};
    if (manifest.has_label_column) {
      fields.emplace_back(s.label ? std::string(label_token(*s.label)) : std::string());
    }
    out << detail::join_csv(fields) << '\n';
  }
  if (!out) throw Error(Errc::kIoError, "write failed: " + path.string());
}

ClassStats class_stats_from_counts(const std::array<std::size_t, kNumClasses>& counts) {
  ClassStats stats;
  stats.counts = counts;
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) throw Error(Errc::kEmptyManifest, "no samples");
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0) {
      throw Error(Errc::kEmptyClass, std::string(label_token(label_from_code(static_cast<int>(c)))));
    }
    stats.weights[c] = static_cast<double>(total) /
                       (static_cast<double>(kNumClasses) * static_cast<double>(counts[c]));
  }
  return stats;
}

ClassStats class_stats(const DatasetManifest& manifest) {
  if (manifest.empty()) throw Error(Errc::kEmptyManifest, "no samples");
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& s : manifest.samples) {
    if (!s.label) throw Error(Errc::kUnlabeledSample, s.index);
    ++counts[label_code(*s.label)];
  }
  return class_stats_from_counts(counts);
}

namespace {

// Largest-remainder apportionment of `total` over `fractions`.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double ideal = fractions[k] * static_cast<double>(total);
    out[k] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
    rem[k] = ideal - static_cast<double>(out[k]);
    assigned += out[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % 3, ++assigned) ++out[order[i]];
  return out;
}

}  // namespace

ManifestSplits split_manifest(const DatasetManifest& manifest, const SplitFractions& fractions,
                              std::uint64_t seed) {
  const std::array<double, 3> f{fractions.train, fractions.validation, fractions.test};
  for (double x : f) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(Errc::kBadFractions, "fractions must be positive");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    throw Error(Errc::kBadFractions, "fractions must sum to 1");
  }
  if (manifest.empty()) throw Error(Errc::kEmptyManifest, "nothing to split");

  // Strata: the two labels plus "unlabeled".
  constexpr std::size_t kStrata = kNumClasses + 1;
  std::array<std::vector<std::size_t>, kStrata> members;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& label = manifest.samples[i].label;
    members[label ? label_code(*label) : kNumClasses].push_back(i);
  }

  const std::array<std::size_t, 3> targets = apportion(manifest.size(), f);

  // Per-stratum floor quotas; leftover units are handed out one per split so
  // every stratum stays within one sample of its proportional share, and the
  // split totals hit the targets exactly when possible.
  std::array<std::array<std::size_t, 3>, kStrata> quota{};
  std::array<std::array<double, 3>, kStrata> frac{};
  std::array<std::size_t, kStrata> leftover{};
  std::array<std::size_t, 3> need = targets;
  for (std::size_t s = 0; s < kStrata; ++s) {
    std::size_t used = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double ideal = f[k] * static_cast<double>(members[s].size());
      quota[s][k] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
      frac[s][k] = ideal - static_cast<double>(quota[s][k]);
      used += quota[s][k];
      need[k] -= quota[s][k];
    }
    leftover[s] = members[s].size() - used;
  }

  // Each stratum picks a subset of splits of size leftover[s]; search all
  // combinations (at most 3^3) for one that meets every split's need,
  // preferring larger fractional parts.
  std::array<unsigned, kStrata> best_mask{};
  double best_score = -1.0;
  bool found = false;
  std::array<unsigned, kStrata> mask{};
  std::function<void(std::size_t)> search = [&](std::size_t s) {
    if (s == kStrata) {
      std::array<std::size_t, 3> got{};
      double score = 0.0;
      for (std::size_t t = 0; t < kStrata; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
          if (mask[t] & (1u << k)) {
            ++got[k];
            score += frac[t][k];
          }
        }
      }
      if (got == need && score > best_score + 1e-12) {
        best_score = score;
        best_mask = mask;
        found = true;
      }
      return;
    }
    for (unsigned m = 0; m < 8; ++m) {
      if (static_cast<std::size_t>(std::popcount(m)) != leftover[s]) continue;
      mask[s] = m;
      search(s + 1);
    }
  };
  search(0);
  if (!found) {
    // Fall back to per-stratum apportionment; totals may drift by one.
    for (std::size_t s = 0; s < kStrata; ++s) quota[s] = apportion(members[s].size(), f);
  } else {
    for (std::size_t s = 0; s < kStrata; ++s) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (best_mask[s] & (1u << k)) ++quota[s][k];
      }
    }
  }

  std::vector<int> assignment(manifest.size(), -1);
  Rng rng(mix_seed(seed, 0x5EED5EEDULL));
  for (std::size_t s = 0; s < kStrata; ++s) {
    std::vector<std::size_t> order = members[s];
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t n = 0; n < quota[s][k]; ++n) assignment[order[pos++]] = static_cast<int>(k);
    }
  }

  ManifestSplits out;
  std::array<DatasetManifest*, 3> parts{&out.train, &out.validation, &out.test};
  const std::array<SplitTag, 3> tags{SplitTag::kTrain, SplitTag::kValidation, SplitTag::kTest};
  for (std::size_t k = 0; k < 3; ++k) {
    parts[k]->split_tag = tags[k];
    parts[k]->has_label_column = manifest.has_label_column;
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    parts[static_cast<std::size_t>(assignment[i])]->samples.push_back(manifest.samples[i]);
  }
  return out;
}

}  // namespace mmhs

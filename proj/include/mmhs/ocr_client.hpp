#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmhs/corpus.hpp"

namespace mmhs {

struct RawOcrResult {
  std::string index;
  std::string text;
  std::string engine_id;
};

class OcrEngine {
 public:
  virtual ~OcrEngine() = default;
  virtual std::string engine_id() const = 0;
  // Engine output, verbatim. Must be safe to call from several threads.
  virtual std::string recognize(const std::filesystem::path& image) const = 0;
  // Number of recognize() calls so far.
  std::size_t invocations() const noexcept { return invocations_.load(); }

 protected:
  void count_invocation() const noexcept { ++invocations_; }

 private:
  mutable std::atomic<std::size_t> invocations_{0};
};

// Runs `command... <image>` and captures stdout. Exit status 0 is success;
// anything else is EngineFailure with the status and the start of stderr.
class ProcessOcrEngine final : public OcrEngine {
 public:
  struct Options {
    std::vector<std::string> command;
    // Queried with `command... --version` when empty.
    std::string engine_id;
    std::chrono::milliseconds timeout{30000};
  };

  // Throws EngineUnavailable if the program cannot be found or run.
  explicit ProcessOcrEngine(Options options);

  std::string engine_id() const override { return options_.engine_id; }
  std::string recognize(const std::filesystem::path& image) const override;

 private:
  Options options_;
};

// Reads `<image>.txt` next to each image. Used for fixtures whose text is
// known in advance.
class SidecarOcrEngine final : public OcrEngine {
 public:
  std::string engine_id() const override { return "sidecar-v1"; }
  std::string recognize(const std::filesystem::path& image) const override;
};

struct ProcessResult {
  int exit_status = 0;  // 128 + signal when killed
  std::string out;
  std::string err;
};

// posix_spawnp + poll. Throws EngineUnavailable when the program cannot be
// started, Timeout when it runs longer than `timeout` (it is then killed).
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

// Throws EngineUnavailable, EngineFailure, Timeout, UnreadableImage (missing
// file).
RawOcrResult extract_text(const std::filesystem::path& image_path, const OcrEngine& engine,
                          std::string index = {});

// Whitespace runs become one space, ends are trimmed, control characters
// (C0, DEL, C1) are dropped and invalid UTF-8 becomes U+FFFD. Case and
// punctuation are kept.
std::string normalize_text(std::string_view raw);

// JSON lines `{"index": ..., "engine_id": ..., "text": ...}`, keyed by
// (index, engine_id). Each record is appended with a single write() under an
// exclusive flock, so concurrent writers never interleave records; an
// incomplete trailing line (a writer died mid-write) is ignored on load.
class OcrCache {
 public:
  using Key = std::pair<std::string, std::string>;  // (index, engine_id)

  // Loads the store if it exists. A missing file is an empty cache.
  explicit OcrCache(std::filesystem::path store_path);

  const std::filesystem::path& store_path() const noexcept { return path_; }
  std::optional<std::string> lookup(const std::string& index, const std::string& engine_id) const;
  // Throws CacheWriteFailure.
  void put(const std::string& index, const std::string& engine_id, const std::string& text);
  std::map<Key, std::string> entries() const;
  std::size_t size() const;
  // Records skipped while loading because they were not valid.
  std::size_t skipped_records() const noexcept { return skipped_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<Key, std::string> entries_;
  std::size_t skipped_ = 0;
};

// Cached normalized text, or extract + normalize + persist on a miss.
std::string get_or_extract(const Sample& sample, OcrCache& cache, const OcrEngine& engine, bool* hit = nullptr);

struct IngestSummary {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t errors = 0;
  // (index, message) for every failed sample, in manifest order.
  std::vector<std::pair<std::string, std::string>> failures;
};

// Fills sample.ocr_text for every sample it can; failures are collected, not
// thrown. `workers` threads share the cache.
IngestSummary ingest(DatasetManifest& manifest, OcrCache& cache, const OcrEngine& engine, unsigned workers = 1);

}  // namespace mmhs

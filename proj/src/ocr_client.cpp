#include "mmhs/ocr_client.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fstream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mmhs/error.hpp"

extern char** environ;

namespace mmhs {
namespace {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::string excerpt(const std::string& s, std::size_t n = 300) {
  std::string out = s.substr(0, n);
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout) {
  if (argv.empty()) throw Error(Errc::kEngineUnavailable, "empty command");
  int out_pipe[2];
  int err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw Error(Errc::kEngineFailure, std::strerror(errno));
  Fd out_r(out_pipe[0]), out_w(out_pipe[1]);
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) throw Error(Errc::kEngineFailure, std::strerror(errno));
  Fd err_r(err_pipe[0]), err_w(err_pipe[1]);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out_w.get(), STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_w.get(), STDERR_FILENO);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw Error(Errc::kEngineUnavailable, fmt::format("{}: {}", argv[0], std::strerror(rc)));
  out_w.reset();
  err_w.reset();

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::array<pollfd, 2> fds{pollfd{out_r.get(), POLLIN, 0}, pollfd{err_r.get(), POLLIN, 0}};
  std::array<std::string*, 2> sinks{&result.out, &result.err};
  int open_streams = 2;
  bool timed_out = false;
  char buf[8192];
  while (open_streams > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    const int n = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].fd < 0 || (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
      const ssize_t got = ::read(fds[i].fd, buf, sizeof buf);
      if (got > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(got));
      } else if (got == 0 || errno != EINTR) {
        fds[i].fd = -1;
        --open_streams;
      }
    }
  }
  if (timed_out) ::kill(pid, SIGKILL);

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw Error(Errc::kTimeout, fmt::format("{} s", std::chrono::duration<double>(timeout).count()));
  }
  if (WIFEXITED(status)) result.exit_status = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) result.exit_status = 128 + WTERMSIG(status);
  return result;
}

ProcessOcrEngine::ProcessOcrEngine(Options options) : options_(std::move(options)) {
  if (options_.command.empty()) throw Error(Errc::kEngineUnavailable, "no OCR command configured");
  if (options_.timeout.count() <= 0) throw Error(Errc::kConfigError, "OCR timeout must be positive");
  if (options_.engine_id.empty()) {
    std::vector<std::string> argv = options_.command;
    argv.emplace_back("--version");
    const ProcessResult r = run_process(argv, options_.timeout);
    // The shell convention for "command not found".
    if (r.exit_status == 127) throw Error(Errc::kEngineUnavailable, excerpt(r.err));
    if (r.exit_status != 0) {
      throw Error(Errc::kEngineUnavailable, fmt::format("version query exited {}: {}", r.exit_status, excerpt(r.err)));
    }
    options_.engine_id = normalize_text(r.out);
    if (options_.engine_id.empty()) throw Error(Errc::kEngineUnavailable, "engine reported an empty version");
  }
}

std::string ProcessOcrEngine::recognize(const std::filesystem::path& image) const {
  count_invocation();
  std::vector<std::string> argv = options_.command;
  argv.push_back(image.string());
  const ProcessResult r = run_process(argv, options_.timeout);
  if (r.exit_status != 0) {
    throw Error(Errc::kEngineFailure, fmt::format("exit {}: {}", r.exit_status, excerpt(r.err)));
  }
  return r.out;
}

std::string SidecarOcrEngine::recognize(const std::filesystem::path& image) const {
  count_invocation();
  const auto sidecar = image.string() + ".txt";
  std::ifstream in(sidecar, std::ios::binary);
  if (!in) throw Error(Errc::kEngineFailure, "no sidecar text for " + image.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RawOcrResult extract_text(const std::filesystem::path& image_path, const OcrEngine& engine, std::string index) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(image_path, ec)) throw Error(Errc::kUnreadableImage, image_path.string());
  return RawOcrResult{std::move(index), engine.recognize(image_path), engine.engine_id()};
}

namespace {

// Decodes one UTF-8 scalar at s[i]; returns its length, or 0 when invalid.
std::size_t utf8_scalar(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  std::size_t len = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
    min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
    min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
    min = 0x10000;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

bool is_space(char32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\v': case '\f': case '\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_control(char32_t cp) { return cp < 0x20 || (cp >= 0x7F && cp <= 0x9F); }

}  // namespace

std::string normalize_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < raw.size()) {
    char32_t cp = 0;
    std::size_t len = utf8_scalar(raw, i, cp);
    std::string_view piece;
    if (len == 0) {
      len = 1;
      piece = "\xEF\xBF\xBD";
      cp = 0xFFFD;
    } else {
      piece = raw.substr(i, len);
    }
    i += len;
    if (is_space(cp)) {
      pending_space = true;
      continue;
    }
    if (is_control(cp)) continue;
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += piece;
  }
  return out;
}

OcrCache::OcrCache(std::filesystem::path store_path) : path_(std::move(store_path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const bool complete = !in.eof();
    try {
      const auto j = nlohmann::json::parse(line);
      entries_[{j.at("index").get<std::string>(), j.at("engine_id").get<std::string>()}] =
          j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      ++skipped_;
      if (complete) spdlog::warn("OCR cache {}: skipping malformed record on line {}", path_.string(), line_no);
    }
  }
}

std::optional<std::string> OcrCache::lookup(const std::string& index, const std::string& engine_id) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find({index, engine_id});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void OcrCache::put(const std::string& index, const std::string& engine_id, const std::string& text) {
  const nlohmann::json j{{"index", index}, {"engine_id", engine_id}, {"text", text}};
  const std::string record = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";

  std::lock_guard lock(mutex_);
  auto fail = [&](const char* what) {
    throw Error(Errc::kCacheWriteFailure, fmt::format("{}: {}: {}", path_.string(), what, std::strerror(errno)));
  };
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  Fd fd(::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
  if (fd.get() < 0) fail("open");
  if (::flock(fd.get(), LOCK_EX) != 0) fail("flock");
  std::size_t written = 0;
  while (written < record.size()) {
    const ssize_t n = ::write(fd.get(), record.data() + written, record.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write");
    }
    written += static_cast<std::size_t>(n);
  }
  ::flock(fd.get(), LOCK_UN);
  entries_[{index, engine_id}] = text;
}

std::map<OcrCache::Key, std::string> OcrCache::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t OcrCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string get_or_extract(const Sample& sample, OcrCache& cache, const OcrEngine& engine, bool* hit) {
  const std::string id = engine.engine_id();
  if (auto cached = cache.lookup(sample.index, id)) {
    if (hit) *hit = true;
    return *cached;
  }
  if (hit) *hit = false;
  const RawOcrResult raw = extract_text(sample.resolved_path, engine, sample.index);
  std::string text = normalize_text(raw.text);
  cache.put(sample.index, raw.engine_id, text);
  return text;
}

IngestSummary ingest(DatasetManifest& manifest, OcrCache& cache, const OcrEngine& engine, unsigned workers) {
  const std::size_t n = manifest.samples.size();
  std::vector<int> outcome(n, 0);  // 1 hit, 2 miss, 3 error
  std::vector<std::string> messages(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      Sample& s = manifest.samples[i];
      try {
        bool hit = false;
        s.ocr_text = get_or_extract(s, cache, engine, &hit);
        outcome[i] = hit ? 1 : 2;
      } catch (const Error& e) {
        outcome[i] = 3;
        messages[i] = e.what();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  IngestSummary summary;
  for (std::size_t i = 0; i < n; ++i) {
    if (outcome[i] == 1) ++summary.hits;
    else if (outcome[i] == 2) ++summary.misses;
    else {
      ++summary.errors;
      summary.failures.emplace_back(manifest.samples[i].index, messages[i]);
    }
  }
  return summary;
}

}  // namespace mmhs

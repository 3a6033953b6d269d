#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <fmt/format.h>

#include "mmhs/error.hpp"
#include "mmhs/tokenizer.hpp"
#include "mmhs/trainer.hpp"

// Checkpoint layout (little-endian):
//   "MMHSCKPT" | u32 version | u64 payload_len | payload | u64 fnv1a64(payload)

namespace mmhs {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'H', 'S', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void matrix(const Matrix& m) {
    pod(static_cast<std::uint32_t>(m.rows()));
    pod(static_cast<std::uint32_t>(m.cols()));
    buf_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void tensor(const NamedTensor& t) {
    str(t.name);
    matrix(t.value);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const auto rows = pod<std::uint32_t>();
    const auto cols = pod<std::uint32_t>();
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    need(count * sizeof(double));
    Matrix m(rows, cols);
    std::memcpy(m.data(), bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return m;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = str();
    t.value = matrix();
    return t;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(Errc::kCorruptCheckpoint, "truncated payload");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  Writer w;
  w.pod(ck.config_fingerprint);
  w.pod(static_cast<std::int32_t>(ck.epoch));
  const ArchitectureInfo& a = ck.architecture;
  w.str(a.vision_identity);
  w.str(a.text_a_identity);
  w.str(a.text_b_identity);
  for (bool b : a.branches.active) w.pod(static_cast<std::uint8_t>(b));
  w.pod(static_cast<std::uint8_t>(a.zero_fill));
  w.pod(static_cast<std::int64_t>(a.head_in_dim));
  w.pod(static_cast<std::uint32_t>(ck.parameters.size()));
  for (const auto& t : ck.parameters) w.tensor(t);
  w.pod(ck.optimizer_steps);
  w.pod(static_cast<std::uint32_t>(ck.optimizer_moments.size()));
  for (const auto& [first, second] : ck.optimizer_moments) {
    w.tensor(first);
    w.tensor(second);
  }
  for (double x : ck.class_weights) w.pod(x);
  w.pod(static_cast<std::uint32_t>(ck.history.records.size()));
  for (const auto& r : ck.history.records) {
    w.pod(static_cast<std::int32_t>(r.epoch));
    w.pod(r.train_loss);
    w.pod(r.train_accuracy);
    w.pod(r.validation_loss);
    w.pod(r.validation_accuracy);
    w.pod(r.learning_rate);
  }
  w.pod(ck.best_metric);
  w.pod(static_cast<std::int32_t>(ck.best_epoch));

  const std::string& payload = w.bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = Checkpoint::kFormatVersion;
  const std::uint64_t len = payload.size();
  const std::uint64_t checksum = fnv1a64(payload);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  if (!out) throw Error(Errc::kIoError, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kMissingFile, path.string());
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (file.size() < kHeader + sizeof(std::uint64_t) || std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(Errc::kCorruptCheckpoint, path.string() + ": bad header");
  }
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  std::memcpy(&version, file.data() + sizeof(kMagic), sizeof(version));
  std::memcpy(&len, file.data() + sizeof(kMagic) + sizeof(version), sizeof(len));
  if (version != Checkpoint::kFormatVersion) {
    throw Error(Errc::kCorruptCheckpoint, fmt::format("{}: unsupported version {}", path.string(), version));
  }
  if (file.size() != kHeader + len + sizeof(std::uint64_t)) {
    throw Error(Errc::kCorruptCheckpoint, path.string() + ": truncated");
  }
  const std::string_view payload(file.data() + kHeader, len);
  std::uint64_t checksum = 0;
  std::memcpy(&checksum, file.data() + kHeader + len, sizeof(checksum));
  if (checksum != fnv1a64(payload)) throw Error(Errc::kCorruptCheckpoint, path.string() + ": checksum mismatch");

  Reader r(payload);
  Checkpoint ck;
  ck.config_fingerprint = r.pod<std::uint64_t>();
  ck.epoch = r.pod<std::int32_t>();
  ck.architecture.vision_identity = r.str();
  ck.architecture.text_a_identity = r.str();
  ck.architecture.text_b_identity = r.str();
  for (bool& b : ck.architecture.branches.active) b = r.pod<std::uint8_t>() != 0;
  ck.architecture.zero_fill = r.pod<std::uint8_t>() != 0;
  ck.architecture.head_in_dim = static_cast<Eigen::Index>(r.pod<std::int64_t>());
  const auto n_params = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) ck.parameters.push_back(r.tensor());
  ck.optimizer_steps = r.pod<std::int64_t>();
  const auto n_moments = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_moments; ++i) {
    NamedTensor first = r.tensor();
    NamedTensor second = r.tensor();
    ck.optimizer_moments.emplace_back(std::move(first), std::move(second));
  }
  for (double& x : ck.class_weights) x = r.pod<double>();
  const auto n_records = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_records; ++i) {
    EpochRecord rec;
    rec.epoch = r.pod<std::int32_t>();
    rec.train_loss = r.pod<double>();
    rec.train_accuracy = r.pod<double>();
    rec.validation_loss = r.pod<double>();
    rec.validation_accuracy = r.pod<double>();
    rec.learning_rate = r.pod<double>();
    ck.history.records.push_back(rec);
  }
  ck.best_metric = r.pod<double>();
  ck.best_epoch = r.pod<std::int32_t>();
  if (!r.done()) throw Error(Errc::kCorruptCheckpoint, path.string() + ": trailing bytes");
  return ck;
}

void restore_parameters(FusionModel& model, const Checkpoint& checkpoint) {
  const ArchitectureInfo have = model.architecture();
  const ArchitectureInfo& want = checkpoint.architecture;
  if (have.vision_identity != want.vision_identity || have.text_a_identity != want.text_a_identity ||
      have.text_b_identity != want.text_b_identity) {
    throw Error(Errc::kBackboneMismatch, "checkpoint was trained with different backbones");
  }
  if (!(have.branches == want.branches) || have.zero_fill != want.zero_fill ||
      have.head_in_dim != want.head_in_dim) {
    throw Error(Errc::kShapeMismatch, "checkpoint branch layout differs from the model");
  }
  std::map<std::string, const Matrix*> stored;
  for (const auto& t : checkpoint.parameters) stored[t.name] = &t.value;
  for (Parameter* p : model.parameters()) {
    const auto it = stored.find(p->name);
    if (it == stored.end()) throw Error(Errc::kCorruptCheckpoint, "missing parameter " + p->name);
    if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols()) {
      throw Error(Errc::kShapeMismatch, "parameter " + p->name + " has a different shape");
    }
    p->value = *it->second;
  }
}

}  // namespace mmhs

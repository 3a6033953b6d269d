#include "mmhs/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mmhs/error.hpp"

#ifndef MMHS_OCR_SCRIPT
#define MMHS_OCR_SCRIPT "tools/ocr/tesseract_engine.js"
#endif

namespace mmhs {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::vector<std::string> split_words(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& value, const char* expected) {
  throw Error(Errc::kConfigError, fmt::format("'{}' is not {}", value, expected));
}

template <typename T>
T parse_integer(const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, out);
  if (value.empty() || r.ec != std::errc() || r.ptr != end) bad_value(value, "an integer");
  return out;
}

double parse_double(const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, out);
  if (value.empty() || r.ec != std::errc() || r.ptr != end) bad_value(value, "a number");
  return out;
}

bool parse_bool(const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(value, "true or false");
}

std::vector<double> parse_doubles(const std::string& value, std::size_t count) {
  std::vector<double> out;
  for (const auto& item : split_list(value, ',')) out.push_back(parse_double(item));
  if (out.size() != count) bad_value(value, count == 2 ? "a list of 2 numbers" : "a list of 3 numbers");
  return out;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

std::string fmt_doubles(const double* v, std::size_t n) {
  std::vector<std::string> items;
  for (std::size_t i = 0; i < n; ++i) items.push_back(fmt_double(v[i]));
  return join(items, ",");
}

BackboneKind parse_kind(const std::string& value) {
  if (value == "stub") return BackboneKind::kStub;
  if (value == "real") return BackboneKind::kReal;
  bad_value(value, "stub or real");
}

std::string_view kind_name(BackboneKind k) { return k == BackboneKind::kStub ? "stub" : "real"; }

OcrEngineKind parse_engine(const std::string& value) {
  if (value == "tesseract") return OcrEngineKind::kTesseract;
  if (value == "sidecar") return OcrEngineKind::kSidecar;
  if (value == "command") return OcrEngineKind::kCommand;
  bad_value(value, "tesseract, sidecar or command");
}

std::string_view engine_name(OcrEngineKind k) {
  switch (k) {
    case OcrEngineKind::kTesseract: return "tesseract";
    case OcrEngineKind::kSidecar: return "sidecar";
    case OcrEngineKind::kCommand: return "command";
  }
  return "?";
}

struct KeyDef {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const fs::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

fs::path resolve(const std::string& value, const fs::path& base) {
  if (value.empty()) return {};
  fs::path p(value);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

KeyDef path_key(std::string key, fs::path RunConfig::*member) {
  return {std::move(key), [member](RunConfig& c, const std::string& v, const fs::path& base) { c.*member = resolve(v, base); },
          [member](const RunConfig& c) { return (c.*member).string(); }};
}

void add_backbone_keys(std::vector<KeyDef>& keys, const std::string& name, BackboneSpec RunConfig::*member,
                       bool pooling) {
  keys.push_back({"backbone." + name + ".kind",
                  [member](RunConfig& c, const std::string& v, const fs::path&) { (c.*member).kind = parse_kind(v); },
                  [member](const RunConfig& c) { return std::string(kind_name((c.*member).kind)); }});
  keys.push_back({"backbone." + name + ".weights",
                  [member](RunConfig& c, const std::string& v, const fs::path& base) {
                    (c.*member).weights = resolve(v, base);
                  },
                  [member](const RunConfig& c) { return (c.*member).weights.string(); }});
  keys.push_back({"backbone." + name + ".seed",
                  [member](RunConfig& c, const std::string& v, const fs::path&) {
                    (c.*member).seed = parse_integer<std::uint64_t>(v);
                  },
                  [member](const RunConfig& c) { return std::to_string((c.*member).seed); }});
  if (pooling) {
    keys.push_back({"backbone." + name + ".pooling",
                    [member](RunConfig& c, const std::string& v, const fs::path&) {
                      try {
                        (c.*member).pooling = parse_pooling_rule(v);
                      } catch (const Error&) {
                        bad_value(v, "first_token, last_token or mean");
                      }
                    },
                    [member](const RunConfig& c) { return std::string(pooling_rule_name((c.*member).pooling)); }});
  }
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    k.push_back(path_key("data.train_manifest", &RunConfig::train_manifest));
    k.push_back(path_key("data.validation_manifest", &RunConfig::validation_manifest));
    k.push_back(path_key("data.test_manifest", &RunConfig::test_manifest));
    k.push_back(path_key("data.image_root", &RunConfig::image_root));
    k.push_back({"data.split",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   if (v.empty()) {
                     c.split.reset();
                     return;
                   }
                   const auto f = parse_doubles(v, 3);
                   c.split = SplitFractions{f[0], f[1], f[2]};
                 },
                 [](const RunConfig& c) {
                   if (!c.split) return std::string();
                   const double f[] = {c.split->train, c.split->validation, c.split->test};
                   return fmt_doubles(f, 3);
                 }});

    k.push_back({"ocr.engine", [](RunConfig& c, const std::string& v, const fs::path&) { c.ocr_engine = parse_engine(v); },
                 [](const RunConfig& c) { return std::string(engine_name(c.ocr_engine)); }});
    k.push_back({"ocr.command",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.ocr_command = split_words(v); },
                 [](const RunConfig& c) { return join(c.ocr_command, " "); }});
    k.push_back({"ocr.timeout_seconds",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.ocr_timeout_seconds = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.ocr_timeout_seconds); }});
    k.push_back({"ocr.workers",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.ocr_workers = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.ocr_workers); }});
    k.push_back({"ocr.auto_ingest",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.auto_ingest = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.auto_ingest ? "true" : "false"); }});
    k.push_back(path_key("cache.root", &RunConfig::cache_root));

    add_backbone_keys(k, "vision", &RunConfig::vision, false);
    add_backbone_keys(k, "text_a", &RunConfig::text_a, true);
    add_backbone_keys(k, "text_b", &RunConfig::text_b, true);

    k.push_back({"preprocess.height",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.preprocess.height = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.preprocess.height); }});
    k.push_back({"preprocess.width",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.preprocess.width = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.preprocess.width); }});
    k.push_back({"preprocess.mean",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   const auto f = parse_doubles(v, 3);
                   std::copy(f.begin(), f.end(), c.preprocess.mean.begin());
                 },
                 [](const RunConfig& c) { return fmt_doubles(c.preprocess.mean.data(), 3); }});
    k.push_back({"preprocess.std",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   const auto f = parse_doubles(v, 3);
                   std::copy(f.begin(), f.end(), c.preprocess.stddev.begin());
                 },
                 [](const RunConfig& c) { return fmt_doubles(c.preprocess.stddev.data(), 3); }});

    k.push_back({"train.learning_rate",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.learning_rate = parse_double(v); },
                 [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }});
    k.push_back({"train.weight_decay",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.weight_decay = parse_double(v); },
                 [](const RunConfig& c) { return fmt_double(c.train.weight_decay); }});
    k.push_back({"train.max_seq_len",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   c.train.max_seq_len = parse_integer<std::size_t>(v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.max_seq_len); }});
    k.push_back({"train.epochs",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.epochs = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.epochs); }});
    k.push_back({"train.batch_size",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.batch_size = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.batch_size); }});
    k.push_back({"train.lr_step_size",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.lr_step_size = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.lr_step_size); }});
    k.push_back({"train.lr_decay",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.lr_decay = parse_double(v); },
                 [](const RunConfig& c) { return fmt_double(c.train.lr_decay); }});
    k.push_back({"train.seed",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.seed = parse_integer<std::uint64_t>(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    k.push_back({"train.class_weights",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   if (v == "auto") {
                     c.train.class_weights.reset();
                     return;
                   }
                   const auto f = parse_doubles(v, 2);
                   c.train.class_weights = std::array<double, kNumClasses>{f[0], f[1]};
                 },
                 [](const RunConfig& c) {
                   return c.train.class_weights ? fmt_doubles(c.train.class_weights->data(), 2) : std::string("auto");
                 }});
    k.push_back({"train.freeze_branches",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.train.freeze_branches = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.train.freeze_branches ? "true" : "false"); }});
    k.push_back({"train.workers",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.workers = parse_integer<int>(v); },
                 [](const RunConfig& c) { return std::to_string(c.workers); }});

    k.push_back({"ablation.variants",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.ablation.variants = split_list(v, ','); },
                 [](const RunConfig& c) { return join(c.ablation.variants, ","); }});
    k.push_back({"ablation.zero_fill",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.ablation.zero_fill = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.ablation.zero_fill ? "true" : "false"); }});
    k.push_back({"ablation.parallel",
                 [](RunConfig& c, const std::string& v, const fs::path&) { c.ablation.parallel = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.ablation.parallel ? "true" : "false"); }});

    k.push_back(path_key("output.dir", &RunConfig::output_dir));
    k.push_back(path_key("eval.checkpoint", &RunConfig::checkpoint));
    return k;
  }();
  return keys;
}

// Splits `key = value # comment`. Values may be double-quoted to keep '#'
// or surrounding spaces; \" and \\ are the only escapes.
std::pair<std::string, std::string> split_line(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw Error(Errc::kConfigError, "expected 'key = value'");
  std::string key = trim(std::string_view(line).substr(0, eq));
  std::string rest = trim(std::string_view(line).substr(eq + 1));
  std::string value;
  if (!rest.empty() && rest.front() == '"') {
    std::size_t i = 1;
    bool closed = false;
    for (; i < rest.size(); ++i) {
      const char ch = rest[i];
      if (ch == '\\' && i + 1 < rest.size() && (rest[i + 1] == '"' || rest[i + 1] == '\\')) {
        value += rest[++i];
      } else if (ch == '"') {
        closed = true;
        ++i;
        break;
      } else {
        value += ch;
      }
    }
    if (!closed) throw Error(Errc::kConfigError, "unterminated quote");
    const std::string tail = trim(std::string_view(rest).substr(i));
    if (!tail.empty() && tail.front() != '#') throw Error(Errc::kConfigError, "text after closing quote");
  } else {
    value = trim(std::string_view(rest).substr(0, rest.find('#')));
  }
  return {key, value};
}

std::string quote_if_needed(const std::string& v) {
  const bool plain = v.find_first_of("#\"") == std::string::npos && trim(v) == v;
  if (plain) return v;
  std::string out = "\"";
  for (char ch : v) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::kConfigError, what);
}

void require_file(const fs::path& p, const std::string& key) {
  require(!p.empty(), key + " is required");
  require(fs::is_regular_file(p), fmt::format("{}: {} not found", key, p.string()));
}

void check_backbone(const BackboneSpec& spec, const std::string& name) {
  if (spec.kind == BackboneKind::kStub) return;
  const std::string key = "backbone." + name + ".weights";
  require(!spec.weights.empty(), key + " is required for a real backbone");
  require(fs::is_directory(spec.weights), fmt::format("{}: {} is not a directory", key, spec.weights.string()));
  require(false, fmt::format("backbone.{}: this build has no runtime for pretrained weights; use kind = stub", name));
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
  std::map<std::string, const KeyDef*> by_name;
  for (const auto& def : key_table()) by_name[def.key] = &def;

  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    try {
      auto [key, value] = split_line(stripped);
      const auto it = by_name.find(key);
      if (it == by_name.end()) throw Error(Errc::kConfigError, fmt::format("unknown key '{}'", key));
      if (!seen.insert(key).second) throw Error(Errc::kConfigError, fmt::format("'{}' set twice", key));
      it->second->set(config, value, base_dir);
    } catch (const Error& e) {
      throw Error(Errc::kConfigError, fmt::format("line {}: {}", number, e.detail()));
    }
  }
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kConfigError, fmt::format("cannot read {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  const fs::path base = fs::absolute(path).parent_path();
  RunConfig config;
  try {
    config = parse_run_config(buffer.str(), base);
  } catch (const Error& e) {
    throw Error(Errc::kConfigError, fmt::format("{}: {}", path.string(), e.detail()));
  }
  if (const char* root = std::getenv(kCacheRootEnv); root != nullptr && *root != '\0') {
    config.cache_root = fs::absolute(root).lexically_normal();
  }
  return config;
}

std::string render_run_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& def : key_table()) {
    const std::string head = def.key.substr(0, def.key.find('.'));
    if (head != section) {
      if (!section.empty()) out += '\n';
      section = head;
    }
    out += fmt::format("{} = {}\n", def.key, quote_if_needed(def.get(config)));
  }
  return out;
}

void validate_run_config(const RunConfig& c, Command command) {
  c.train.validate();
  require(c.workers >= 1, "train.workers must be >= 1");
  require(c.preprocess.height >= 1 && c.preprocess.width >= 1, "preprocess.height and width must be positive");
  for (double s : c.preprocess.stddev) require(s > 0.0 && std::isfinite(s), "preprocess.std must be positive");
  for (double m : c.preprocess.mean) require(std::isfinite(m), "preprocess.mean must be finite");
  require(c.ocr_timeout_seconds >= 1, "ocr.timeout_seconds must be >= 1");
  require(c.ocr_workers >= 1, "ocr.workers must be >= 1");
  if (c.ocr_engine == OcrEngineKind::kCommand) require(!c.ocr_command.empty(), "ocr.command is required");
  if (c.ocr_engine == OcrEngineKind::kTesseract && c.ocr_command.empty()) {
    require(fs::is_regular_file(MMHS_OCR_SCRIPT), fmt::format("bundled OCR script {} not found", MMHS_OCR_SCRIPT));
  }
  require(!c.cache_root.empty(), "cache.root is required");
  require(!fs::exists(c.cache_root) || fs::is_directory(c.cache_root),
          fmt::format("cache.root: {} is not a directory", c.cache_root.string()));
  require(!c.output_dir.empty(), "output.dir is required");
  require(!fs::exists(c.output_dir) || fs::is_directory(c.output_dir),
          fmt::format("output.dir: {} is not a directory", c.output_dir.string()));
  if (!c.image_root.empty()) {
    require(fs::is_directory(c.image_root), fmt::format("data.image_root: {} is not a directory", c.image_root.string()));
  }

  if (c.split) {
    const auto& f = *c.split;
    require(f.train > 0.0 && f.validation >= 0.0 && f.test >= 0.0 && std::abs(f.train + f.validation + f.test - 1.0) < 1e-9,
            "data.split must be three non-negative fractions summing to 1");
    require(c.validation_manifest.empty() && c.test_manifest.empty(),
            "data.split cannot be combined with data.validation_manifest or data.test_manifest");
  }

  {
    std::set<std::string> names;
    require(!c.ablation.variants.empty(), "ablation.variants is empty");
    for (const auto& v : c.ablation.variants) {
      try {
        variant_by_name(v);
      } catch (const Error&) {
        require(false, fmt::format("ablation.variants: unknown variant '{}'", v));
      }
      require(names.insert(v).second, fmt::format("ablation.variants: '{}' listed twice", v));
    }
  }

  const auto optional_file = [](const fs::path& p, const std::string& key) {
    if (!p.empty()) require_file(p, key);
  };
  switch (command) {
    case Command::kIngest:
      require(!c.train_manifest.empty() || !c.validation_manifest.empty() || !c.test_manifest.empty(),
              "no manifest to ingest");
      optional_file(c.train_manifest, "data.train_manifest");
      optional_file(c.validation_manifest, "data.validation_manifest");
      optional_file(c.test_manifest, "data.test_manifest");
      return;
    case Command::kTrain:
    case Command::kAblate:
      require_file(c.train_manifest, "data.train_manifest");
      optional_file(c.validation_manifest, "data.validation_manifest");
      optional_file(c.test_manifest, "data.test_manifest");
      break;
    case Command::kEvaluate:
    case Command::kReport:
      require_file(c.checkpoint, "eval.checkpoint");
      require_file(c.test_manifest, "data.test_manifest");
      break;
  }
  check_backbone(c.vision, "vision");
  check_backbone(c.text_a, "text_a");
  check_backbone(c.text_b, "text_b");
}

BackboneSet make_backbones(const RunConfig& config) {
  check_backbone(config.vision, "vision");
  check_backbone(config.text_a, "text_a");
  check_backbone(config.text_b, "text_b");
  StubVisionBackbone::Options v;
  v.seed = config.vision.seed;
  v.input_height = config.preprocess.height;
  v.input_width = config.preprocess.width;
  StubTextBackbone::Options a;
  a.seed = config.text_a.seed;
  a.pooling = config.text_a.pooling;
  StubTextBackbone::Options b;
  b.seed = config.text_b.seed;
  b.pooling = config.text_b.pooling;
  b.specials = SpecialTokens::xlnet_style();
  return {std::make_shared<StubVisionBackbone>(v), std::make_shared<StubTextBackbone>(a),
          std::make_shared<StubTextBackbone>(b)};
}

std::unique_ptr<OcrEngine> make_ocr_engine(const RunConfig& config) {
  if (config.ocr_engine == OcrEngineKind::kSidecar) return std::make_unique<SidecarOcrEngine>();
  ProcessOcrEngine::Options options;
  options.command = config.ocr_command;
  if (options.command.empty()) options.command = {"node", MMHS_OCR_SCRIPT};
  options.timeout = std::chrono::seconds(config.ocr_timeout_seconds);
  return std::make_unique<ProcessOcrEngine>(std::move(options));
}

}  // namespace mmhs

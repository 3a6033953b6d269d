#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "mmhs/cli.hpp"
#include "mmhs/error.hpp"
#include "mmhs/run_config.hpp"
#include "test_support.hpp"

namespace mmhs {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mmhs::Error";
  return Errc::kIoError;
}

std::string error_detail(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.detail();
  }
  return {};
}

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mmhs");
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path only_run_dir(const fs::path& base) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(base)) dirs.push_back(e.path());
  EXPECT_EQ(dirs.size(), 1u);
  return dirs.empty() ? fs::path() : dirs.front();
}

std::string base_config(const std::string& extra = {}, int epochs = 3) {
  return std::string("# small stub run\n") +
         "data.train_manifest = corpus/manifest.csv\n"
         "ocr.engine = sidecar   # text comes from <image>.txt\n"
         "cache.root = cache\n"
         "output.dir = runs\n"
         "preprocess.height = 64\n"
         "preprocess.width = 64\n"
         "train.epochs = " + std::to_string(epochs) + "\n"
         "train.batch_size = 8\n"
         "train.learning_rate = 0.001\n"
         "train.max_seq_len = 32\n"
         "train.seed = 7\n" +
         extra;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { unsetenv(kCacheRootEnv); }

  fs::path write_config(const std::string& text, const std::string& name = "run.cfg") {
    const fs::path p = dir_ / name;
    testing::write_text_file(p, text);
    return p;
  }

  TempDir dir_;
};

TEST_F(CliTest, ParsesCommentsQuotesAndRelativePaths) {
  const RunConfig c = parse_run_config(
      "data.train_manifest = a/train.csv  # trailing\n"
      "  # indented comment\n"
      "\n"
      "data.test_manifest = \"dir # with hash/test.csv\"\n"
      "train.class_weights = 0.9, 1.1\n"
      "train.learning_rate = 3e-4\n"
      "ablation.variants = vision, ensemble\n"
      "ocr.engine = command\n"
      "ocr.command = /usr/bin/env node engine.js\n"
      "backbone.text_b.pooling = last_token\n",
      "/base");
  EXPECT_EQ(c.train_manifest, fs::path("/base/a/train.csv"));
  EXPECT_EQ(c.test_manifest, fs::path("/base/dir # with hash/test.csv"));
  ASSERT_TRUE(c.train.class_weights.has_value());
  EXPECT_DOUBLE_EQ((*c.train.class_weights)[1], 1.1);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 3e-4);
  EXPECT_EQ(c.ablation.variants, (std::vector<std::string>{"vision", "ensemble"}));
  EXPECT_EQ(c.ocr_command, (std::vector<std::string>{"/usr/bin/env", "node", "engine.js"}));
  EXPECT_EQ(c.text_b.pooling, PoolingRule::kLastToken);
  EXPECT_EQ(c.text_a.pooling, PoolingRule::kMean);
}

TEST_F(CliTest, DefaultsFollowTheTrainingRecipe) {
  const RunConfig c = parse_run_config("", "/");
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 3e-4);
  EXPECT_DOUBLE_EQ(c.train.weight_decay, 3e-5);
  EXPECT_EQ(c.train.max_seq_len, 512u);
  EXPECT_EQ(c.train.epochs, 100);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.lr_step_size, 30);
  EXPECT_DOUBLE_EQ(c.train.lr_decay, 0.1);
  EXPECT_EQ(c.preprocess.height, 299);
  EXPECT_EQ(c.ablation.variants.size(), 5u);
}

TEST_F(CliTest, RejectsUnknownRepeatedAndMalformedKeys) {
  EXPECT_EQ(error_detail([] { parse_run_config("train.epochs = 3\ntrain.epoch = 4\n", "/"); }),
            "line 2: unknown key 'train.epoch'");
  EXPECT_EQ(error_detail([] { parse_run_config("train.epochs = 3\ntrain.epochs = 4\n", "/"); }),
            "line 2: 'train.epochs' set twice");
  EXPECT_EQ(error_detail([] { parse_run_config("train.epochs 3\n", "/"); }), "line 1: expected 'key = value'");
  EXPECT_EQ(code_of([] { parse_run_config("train.epochs = three\n", "/"); }), Errc::kConfigError);
  EXPECT_EQ(code_of([] { parse_run_config("train.epochs = 3.5\n", "/"); }), Errc::kConfigError);
  EXPECT_EQ(code_of([] { parse_run_config("train.freeze_branches = yes\n", "/"); }), Errc::kConfigError);
  EXPECT_EQ(code_of([] { parse_run_config("preprocess.mean = 1,2\n", "/"); }), Errc::kConfigError);
  EXPECT_EQ(code_of([] { parse_run_config("backbone.vision.kind = resnet\n", "/"); }), Errc::kConfigError);
  EXPECT_EQ(code_of([] { parse_run_config("backbone.vision.pooling = mean\n", "/"); }), Errc::kConfigError);
  EXPECT_EQ(code_of([] { parse_run_config("output.dir = \"unterminated\n", "/"); }), Errc::kConfigError);
}

TEST_F(CliTest, RenderedConfigParsesBackToItself) {
  RunConfig c = parse_run_config(base_config("data.image_root = \"odd #dir\"\ntrain.class_weights = 2,0.5\n"
                                             "data.split = 0.6,0.2,0.2\nablation.zero_fill = true\n"),
                                 "/root/x");
  const std::string once = render_run_config(c);
  const std::string twice = render_run_config(parse_run_config(once, "/elsewhere"));
  EXPECT_EQ(once, twice);
  EXPECT_NE(once.find("data.image_root = \"/root/x/odd #dir\""), std::string::npos);
  EXPECT_EQ(parse_run_config(once, "/").train.fingerprint(), c.train.fingerprint());
}

TEST_F(CliTest, CacheRootEnvironmentOverride) {
  const fs::path cfg = write_config("cache.root = from_file\n");
  EXPECT_EQ(load_run_config(cfg).cache_root, dir_.path() / "from_file");
  setenv(kCacheRootEnv, (dir_ / "from_env").c_str(), 1);
  EXPECT_EQ(load_run_config(cfg).cache_root, dir_.path() / "from_env");
  unsetenv(kCacheRootEnv);
}

TEST_F(CliTest, ValidationChecksInputsPerCommand) {
  testing::make_synthetic_corpus(dir_ / "corpus", 8);
  const RunConfig ok = load_run_config(write_config(base_config()));
  EXPECT_NO_THROW(validate_run_config(ok, Command::kTrain));
  EXPECT_NO_THROW(validate_run_config(ok, Command::kIngest));
  EXPECT_EQ(error_detail([&] { validate_run_config(ok, Command::kEvaluate); }), "eval.checkpoint is required");

  RunConfig c = ok;
  c.train_manifest = dir_ / "missing.csv";
  EXPECT_EQ(code_of([&] { validate_run_config(c, Command::kTrain); }), Errc::kConfigError);
  c = ok;
  c.train.epochs = 0;
  EXPECT_EQ(code_of([&] { validate_run_config(c, Command::kTrain); }), Errc::kConfigError);
  c = ok;
  c.ablation.variants = {"vision", "vision"};
  EXPECT_EQ(code_of([&] { validate_run_config(c, Command::kAblate); }), Errc::kConfigError);
  c = ok;
  c.ablation.variants = {"audio"};
  EXPECT_EQ(code_of([&] { validate_run_config(c, Command::kAblate); }), Errc::kConfigError);
  c = ok;
  c.split = SplitFractions{0.5, 0.2, 0.2};
  EXPECT_EQ(code_of([&] { validate_run_config(c, Command::kTrain); }), Errc::kConfigError);

  c = ok;
  c.text_a.kind = BackboneKind::kReal;
  c.text_a.weights = dir_ / "bert-weights";
  EXPECT_NE(error_detail([&] { validate_run_config(c, Command::kTrain); }).find("backbone.text_a.weights"),
            std::string::npos);
  fs::create_directories(c.text_a.weights);
  EXPECT_NE(error_detail([&] { validate_run_config(c, Command::kTrain); }).find("no runtime"), std::string::npos);
}

TEST_F(CliTest, IngestIsIdempotent) {
  testing::make_synthetic_corpus(dir_ / "corpus", 12);
  const fs::path cfg = write_config(base_config());
  const CliRun first = cli({"ingest", "--config", cfg.string()});
  EXPECT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("hits=0 misses=12 errors=0 engine_calls=12"), std::string::npos) << first.out;
  const CliRun second = cli({"ingest", "--config", cfg.string()});
  EXPECT_EQ(second.code, 0) << second.err;
  EXPECT_NE(second.out.find("hits=12 misses=0 errors=0 engine_calls=0"), std::string::npos) << second.out;
  EXPECT_EQ(OcrCache(dir_ / "cache" / "ocr.jsonl").size(), 12u);
}

TEST_F(CliTest, IngestNamesUnreadableImages) {
  testing::make_synthetic_corpus(dir_ / "corpus", 8);
  fs::remove(dir_ / "corpus" / "images" / "img_005.png");
  const CliRun r = cli({"ingest", "--config", write_config(base_config()).string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("syn005"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("misses=7 errors=1"), std::string::npos) << r.out;
}

TEST_F(CliTest, IngestOfEmptyManifest) {
  fs::create_directories(dir_ / "corpus");
  testing::write_text_file(dir_ / "corpus" / "manifest.csv", "index,image_path,label\n");
  const CliRun r = cli({"ingest", "--config", write_config(base_config()).string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hits=0 misses=0 errors=0 engine_calls=0"), std::string::npos);
}

TEST_F(CliTest, TrainWritesArtifactsDeterministically) {
  testing::make_synthetic_corpus(dir_ / "corpus", 16);
  const fs::path cfg = write_config(base_config());
  const CliRun a = cli({"train", "--config", cfg.string(), "--out", (dir_ / "a").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const CliRun b = cli({"train", "--config", cfg.string(), "--out", (dir_ / "b").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  const fs::path run_a = only_run_dir(dir_ / "a");
  const fs::path run_b = only_run_dir(dir_ / "b");
  EXPECT_EQ(run_a.filename().string().rfind("train-", 0), 0u);
  for (const char* f : {"checkpoint_final.bin", "checkpoint_best.bin", "history.csv", "accuracy_vs_epoch.svg",
                        "loss_vs_epoch.svg", "config.txt"}) {
    EXPECT_TRUE(fs::is_regular_file(run_a / f)) << f;
  }
  const std::string history = testing::read_text_file(run_a / "history.csv");
  EXPECT_EQ(history, testing::read_text_file(run_b / "history.csv"));
  EXPECT_EQ(TrainHistory::read_csv(run_a / "history.csv").size(), 3u);

  // The copied config reproduces the run.
  const std::string resolved = testing::read_text_file(run_a / "config.txt");
  EXPECT_NE(resolved.find("train.seed = 7"), std::string::npos);
  EXPECT_NE(resolved.find("output.dir = " + (dir_ / "a").string()), std::string::npos);
  const CliRun c = cli({"train", "--config", (run_a / "config.txt").string(), "--out", (dir_ / "c").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(testing::read_text_file(only_run_dir(dir_ / "c") / "history.csv"), history);

  // Same directory base twice: distinct run directories.
  const CliRun d = cli({"train", "--config", cfg.string(), "--out", (dir_ / "a").string(), "--seed", "8"});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(std::distance(fs::directory_iterator(dir_ / "a"), fs::directory_iterator()), 2);
}

TEST_F(CliTest, InvalidConfigWritesNothing) {
  testing::make_synthetic_corpus(dir_ / "corpus", 8);
  const auto before = testing::read_text_file(dir_ / "corpus" / "manifest.csv");
  for (const std::string bad : {base_config("train.epochz = 3\n"), base_config("train.batch_size = 0\n"),
                                base_config("backbone.vision.kind = real\n"),
                                base_config("backbone.vision.kind = real\nbackbone.vision.weights = nowhere\n")}) {
    const CliRun r = cli({"train", "--config", write_config(bad).string()});
    EXPECT_EQ(r.code, kExitUsage) << bad;
    EXPECT_NE(r.err.find("invalid config"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(dir_ / "runs"));
  EXPECT_FALSE(fs::exists(dir_ / "cache"));
  EXPECT_EQ(testing::read_text_file(dir_ / "corpus" / "manifest.csv"), before);
  EXPECT_EQ(cli({"train", "--config", (dir_ / "absent.cfg").string()}).code, kExitUsage);
  EXPECT_EQ(cli({"fly"}).code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir_ / "runs"));
}

TEST_F(CliTest, TrainWithoutCachedTextFailsWhenAutoIngestIsOff) {
  testing::make_synthetic_corpus(dir_ / "corpus", 8);
  const CliRun r = cli({"train", "--config", write_config(base_config("ocr.auto_ingest = false\n")).string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("MissingText"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvaluateReportAndAblate) {
  const auto corpus = testing::make_synthetic_corpus(dir_ / "corpus", 40);
  testing::make_pattern_fixture(dir_ / "pattern");
  DatasetManifest four = corpus.manifest;
  four.samples.resize(4);
  write_manifest(four, dir_ / "corpus" / "four.csv");
  const std::string common = base_config("data.test_manifest = corpus/four.csv\n", 30);
  const CliRun t = cli({"train", "--config", write_config(common).string()});
  ASSERT_EQ(t.code, 0) << t.err;
  const fs::path ckpt = only_run_dir(dir_ / "runs") / "checkpoint_final.bin";

  const fs::path eval_cfg = write_config(common + "eval.checkpoint = " + ckpt.string() + "\n", "eval.cfg");
  const CliRun e = cli({"evaluate", "--config", eval_cfg.string(), "--out", (dir_ / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string metrics = testing::read_text_file(only_run_dir(dir_ / "eval") / "metrics.csv");
  EXPECT_NE(metrics.find("accuracy,1\n"), std::string::npos) << metrics;
  EXPECT_NE(e.out.find("evaluate: 4 samples, accuracy=1.0000"), std::string::npos) << e.out;

  const CliRun mismatch = cli({"evaluate", "--config", eval_cfg.string(), "--seed", "99", "--out",
                               (dir_ / "mismatch").string()});
  EXPECT_EQ(mismatch.code, kExitFailure);
  EXPECT_NE(mismatch.err.find("FingerprintMismatch"), std::string::npos) << mismatch.err;

  const std::string report_cfg =
      base_config("data.test_manifest = pattern/pattern.csv\n", 30) + "eval.checkpoint = " + ckpt.string() + "\n";
  const CliRun r = cli({"report", "--config", write_config(report_cfg, "report.cfg").string(), "--out",
                        (dir_ / "report").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("report: correct=4 incorrect=4"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::is_regular_file(only_run_dir(dir_ / "report") / "empirical.md"));

  const CliRun a = cli({"ablate", "--config",
                        write_config(base_config("ablation.variants = vision,ensemble\n"), "ablate.cfg").string(),
                        "--out", (dir_ / "ablate").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const std::string table = testing::read_text_file(only_run_dir(dir_ / "ablate") / "ablation.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3) << table;
  EXPECT_EQ(table.rfind("model,accuracy,f1\nvision,", 0), 0u) << table;
}

}  // namespace
}  // namespace mmhs

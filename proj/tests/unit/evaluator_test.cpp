#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "mmhs/error.hpp"
#include "mmhs/evaluator.hpp"
#include "mmhs/rng.hpp"
#include "test_support.hpp"

namespace mmhs {
namespace {

constexpr Label H = Label::kHateSpeech;
constexpr Label N = Label::kNoHateSpeech;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mmhs::Error";
  return Errc::kIoError;
}

TEST(ConfusionTest, Examples) {
  EXPECT_EQ(confusion(std::vector{H, N}, std::vector{H, N}), (ConfusionMatrix{1, 0, 1, 0}));
  EXPECT_EQ(confusion(std::vector{H, H, N, N}, std::vector{H, N, N, N}), (ConfusionMatrix{1, 1, 2, 0}));
  EXPECT_EQ(confusion(std::vector{N, N, N}, std::vector{H, H, H}), (ConfusionMatrix{0, 0, 0, 3}));
  EXPECT_EQ(code_of([] { confusion(std::vector{H}, std::vector{H, N}); }), Errc::kLengthMismatch);
  EXPECT_EQ(code_of([] { confusion(std::vector<Label>{}, std::vector<Label>{}); }), Errc::kEmptyInput);
}

TEST(MetricsTest, HandComputedExample) {
  const MetricReport r = metrics({1, 1, 2, 0});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_NEAR(r.per_class[1].f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[0].f1, 0.8, 1e-12);
  EXPECT_NEAR(r.macro_f1, 0.7333, 5e-5);
  EXPECT_NEAR(r.macro_f1, 11.0 / 15.0, 1e-12);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(MetricsTest, PerfectAndBalancedCases) {
  const MetricReport perfect = metrics({7, 0, 5, 0});
  EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(perfect.macro_f1, 1.0);
  const MetricReport half = metrics({1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(half.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(half.per_class[0].f1, 0.5);
  EXPECT_DOUBLE_EQ(half.per_class[1].f1, 0.5);
  EXPECT_DOUBLE_EQ(half.macro_f1, 0.5);
  EXPECT_EQ(code_of([] { metrics({}); }), Errc::kEmptyMatrix);
}

TEST(MetricsTest, AbsentClassScoresZeroWithWarning) {
  // Only negatives, all predicted correctly: the positive class never occurs.
  const MetricReport r = metrics({0, 0, 4, 0});
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].precision, 0.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].recall, 0.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
  EXPECT_EQ(r.warnings.size(), 3u);
}

// Oracle: per-class tallies straight from the vectors, no confusion matrix.
struct Tally {
  double accuracy;
  std::array<double, 2> precision, recall, f1;
};

Tally brute_force(const std::vector<Label>& pred, const std::vector<Label>& gold) {
  Tally t{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += pred[i] == gold[i];
  t.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  for (int c = 0; c < 2; ++c) {
    std::size_t predicted_c = 0, actual_c = 0, hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      predicted_c += label_code(pred[i]) == c;
      actual_c += label_code(gold[i]) == c;
      hit += label_code(pred[i]) == c && label_code(gold[i]) == c;
    }
    const double p = predicted_c ? static_cast<double>(hit) / predicted_c : 0.0;
    const double r = actual_c ? static_cast<double>(hit) / actual_c : 0.0;
    t.precision[c] = p;
    t.recall[c] = r;
    t.f1[c] = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return t;
}

std::vector<Label> random_labels(Rng& rng, std::size_t n, double p_hate) {
  std::vector<Label> out(n);
  for (auto& l : out) l = rng.uniform() < p_hate ? H : N;
  return out;
}

TEST(MetricsTest, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const double skew = rng.uniform();
    const auto gold = random_labels(rng, n, skew);
    const auto pred = random_labels(rng, n, rng.uniform());
    const MetricReport r = metrics(confusion(pred, gold));
    const Tally t = brute_force(pred, gold);
    ASSERT_NEAR(r.accuracy, t.accuracy, 1e-9);
    for (int c = 0; c < 2; ++c) {
      ASSERT_NEAR(r.per_class[c].precision, t.precision[c], 1e-9);
      ASSERT_NEAR(r.per_class[c].recall, t.recall[c], 1e-9);
      ASSERT_NEAR(r.per_class[c].f1, t.f1[c], 1e-9);
    }
    ASSERT_NEAR(r.macro_f1, (t.f1[0] + t.f1[1]) / 2, 1e-9);
  }
}

TEST(MetricsTest, PermutationAndClassSwapInvariance) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    auto gold = random_labels(rng, n, 0.5);
    auto pred = random_labels(rng, n, 0.5);
    const MetricReport base = metrics(confusion(pred, gold));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<Label> pg, pp;
    for (std::size_t i : order) {
      pg.push_back(gold[i]);
      pp.push_back(pred[i]);
    }
    const MetricReport permuted = metrics(confusion(pp, pg));
    EXPECT_EQ(permuted.accuracy, base.accuracy);
    EXPECT_EQ(permuted.macro_f1, base.macro_f1);

    auto flip = [](std::vector<Label> v) {
      for (auto& l : v) l = l == H ? N : H;
      return v;
    };
    const MetricReport swapped = metrics(confusion(flip(pred), flip(gold)));
    EXPECT_NEAR(swapped.accuracy, base.accuracy, 1e-15);
    EXPECT_NEAR(swapped.macro_f1, base.macro_f1, 1e-15);
    EXPECT_EQ(swapped.per_class[0].f1, base.per_class[1].f1);
    EXPECT_EQ(swapped.per_class[1].precision, base.per_class[0].precision);
  }
}

TEST(MetricsTest, ReportsRender) {
  const MetricReport r = metrics({1, 1, 2, 0});
  const std::string csv = metric_report_csv(r);
  EXPECT_NE(csv.find("accuracy,0.75\n"), std::string::npos);
  EXPECT_NE(metric_report_markdown(r).find("Macro average"), std::string::npos);
}

// ---- ablation ----

FeatureTable toy_table(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  FeatureTable t;
  t.native.vision = Matrix(2048, static_cast<Eigen::Index>(n));
  t.native.text_a = Matrix(768, static_cast<Eigen::Index>(n));
  t.native.text_b = Matrix(768, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const Label y = j % 2 ? H : N;
    for (Matrix* m : {&t.native.vision, &t.native.text_a, &t.native.text_b}) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        (*m)(i, static_cast<Eigen::Index>(j)) = rng.uniform(-1, 1) + (y == H && i % 3 == 0 ? 0.5 : 0.0);
      }
    }
    t.labels.push_back(y);
    t.indices.push_back("t" + std::to_string(j));
  }
  return t;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 1e-3;
  c.seed = 3;
  return c;
}

TEST(AblationTest, TwoVariantsGiveTwoRows) {
  const FeatureTable train = toy_table(1, 16);
  AblationSpec spec;
  spec.variants = {"text_a", "ensemble"};
  const AblationTable t = run_ablation(spec, testing::stub_backbones(), toy_config(), train, FeatureTable{}, train);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].model, "text_a");
  EXPECT_EQ(t.rows[1].model, "ensemble");
  const std::string csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,accuracy,f1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(t.to_markdown().find("| Model | Accuracy | F1 Score |"), std::string::npos);
  EXPECT_EQ(t.rows[0].history.size(), 3u);
}

TEST(AblationTest, VariantGuards) {
  const FeatureTable train = toy_table(1, 8);
  AblationSpec dup;
  dup.variants = {"vision", "vision"};
  EXPECT_EQ(code_of([&] { run_ablation(dup, testing::stub_backbones(), toy_config(), train, {}, train); }),
            Errc::kDuplicateVariant);
  AblationSpec unknown;
  unknown.variants = {"resnet"};
  EXPECT_EQ(code_of([&] { run_ablation(unknown, testing::stub_backbones(), toy_config(), train, {}, train); }),
            Errc::kUnknownVariant);
  EXPECT_EQ(code_of([] { variant_by_name("bert"); }), Errc::kUnknownVariant);
  EXPECT_EQ(known_variants().size(), 5u);
}

TEST(AblationTest, ParallelMatchesSequential) {
  const FeatureTable train = toy_table(2, 16);
  const FeatureTable eval = toy_table(3, 12);
  AblationSpec spec;
  spec.variants = {"text_b", "vision", "text_pair"};
  const auto seq = run_ablation(spec, testing::stub_backbones(), toy_config(), train, {}, eval);
  spec.parallel = true;
  const auto par = run_ablation(spec, testing::stub_backbones(), toy_config(), train, {}, eval);
  EXPECT_EQ(seq.to_csv(), par.to_csv());
}

TEST(AblationTest, ZeroFillKeepsFullWidthHead) {
  const FeatureTable train = toy_table(2, 8);
  AblationSpec spec;
  spec.variants = {"vision"};
  spec.zero_fill = true;
  const auto zf = run_ablation(spec, testing::stub_backbones(), toy_config(), train, {}, train);
  spec.zero_fill = false;
  const auto rebuilt = run_ablation(spec, testing::stub_backbones(), toy_config(), train, {}, train);
  // Different head widths draw different initial weights.
  EXPECT_NE(zf.rows[0].history.to_csv(), rebuilt.rows[0].history.to_csv());
}

// ---- plots ----

TrainHistory synthetic_history(int epochs) {
  TrainHistory h;
  for (int e = 1; e <= epochs; ++e) {
    h.records.push_back({e, 1.0 / e, 1.0 - 0.5 / e, 1.2 / e, 0.9 - 0.5 / e, 3e-4});
  }
  return h;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(PlotTest, HundredEpochs) {
  testing::TempDir dir;
  const PlotFiles f = plot_history(synthetic_history(100), dir / "plots");
  EXPECT_EQ(f.accuracy_plot.filename(), "accuracy_vs_epoch.svg");
  EXPECT_EQ(f.loss_plot.filename(), "loss_vs_epoch.svg");
  for (const auto& p : {f.accuracy_plot, f.loss_plot}) {
    const std::string svg = testing::read_text_file(p);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
    // Two series, one marker per point.
    std::size_t circles = 0;
    for (std::size_t pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) {
      ++circles;
    }
    EXPECT_EQ(circles, 200u);
  }
  const std::string acc = testing::read_text_file(f.accuracy_data);
  EXPECT_EQ(acc.substr(0, acc.find('\n')), "epoch,train,validation");
  EXPECT_EQ(line_count(acc), 101u);
  EXPECT_EQ(line_count(testing::read_text_file(f.loss_data)), 101u);
}

TEST(PlotTest, SingleEpochAndMissingValidation) {
  testing::TempDir dir;
  TrainHistory h;
  h.records.push_back({1, 0.7, 0.5, std::nan(""), std::nan(""), 1e-3});
  const PlotFiles f = plot_history(h, dir.path());
  EXPECT_GT(std::filesystem::file_size(f.accuracy_plot), 0u);
  EXPECT_EQ(line_count(testing::read_text_file(f.loss_data)), 2u);
}

TEST(PlotTest, Guards) {
  testing::TempDir dir;
  EXPECT_EQ(code_of([&] { plot_history(TrainHistory{}, dir.path()); }), Errc::kEmptyHistory);
  testing::write_text_file(dir / "file", "x");
  EXPECT_EQ(code_of([&] { plot_history(synthetic_history(3), dir / "file" / "sub"); }),
            Errc::kUnwritableDirectory);
}

// ---- empirical report ----

Sample labeled(const std::string& index, Label l, const std::string& text) {
  Sample s;
  s.index = index;
  s.label = l;
  s.ocr_text = text;
  return s;
}

Prediction constant_prediction(Label l) {
  return predict(l == H ? std::array<double, 2>{0.0, 1.0} : std::array<double, 2>{1.0, 0.0});
}

TEST(EmpiricalTest, PerfectPredictor) {
  DatasetManifest m;
  m.samples = {labeled("a", H, "x"), labeled("b", N, "y"), labeled("c", H, "z"), labeled("d", N, "w")};
  const EmpiricalReport r = empirical_report([](const Sample& s) { return constant_prediction(*s.label); }, m);
  ASSERT_EQ(r.rows.size(), 4u);
  for (const auto& row : r.rows) EXPECT_EQ(row.actual, row.predicted);
  EXPECT_EQ(r.summary.total_correct(), 4u);
  EXPECT_EQ(r.summary.total_incorrect(), 0u);
}

TEST(EmpiricalTest, ConstantPredictorOnHateSamples) {
  DatasetManifest m;
  m.samples = {labeled("a", H, "x"), labeled("b", H, "y")};
  const EmpiricalReport r = empirical_report([](const Sample&) { return constant_prediction(N); }, m);
  EXPECT_EQ(r.summary.incorrect[label_code(H)], 2u);
  EXPECT_EQ(r.summary.total_correct(), 0u);
}

// Actual/predicted pairs for eight instances, half of them misclassified.
TEST(EmpiricalTest, MixedOutcomePattern) {
  const std::vector<std::tuple<std::string, Label, Label>> table{
      {"4a", H, N}, {"4b", H, H}, {"4c", H, N}, {"4d", H, H},
      {"5a", N, N}, {"5b", N, N}, {"5c", N, H}, {"5d", N, H},
  };
  DatasetManifest m;
  std::map<std::string, Label> predicted;
  for (const auto& [idx, actual, pred] : table) {
    m.samples.push_back(labeled(idx, actual, "text " + idx));
    predicted[idx] = pred;
  }
  const EmpiricalReport r =
      empirical_report([&](const Sample& s) { return constant_prediction(predicted.at(s.index)); }, m);
  EXPECT_EQ(r.summary.total_correct(), 4u);
  EXPECT_EQ(r.summary.total_incorrect(), 4u);
  EXPECT_EQ(r.summary.incorrect[label_code(H)], 2u);
  EXPECT_EQ(r.summary.incorrect[label_code(N)], 2u);
  EXPECT_NE(r.to_markdown().find("| Total | 4 | 4 |"), std::string::npos);
  EXPECT_EQ(line_count(r.to_csv()), 9u);
}

TEST(EmpiricalTest, ExcerptAndGuards) {
  std::string text;
  for (int i = 0; i < 200; ++i) text += "\xC3\xA9";  // U+00E9
  DatasetManifest m;
  m.samples = {labeled("a", H, text)};
  const EmpiricalReport r = empirical_report([](const Sample&) { return constant_prediction(H); }, m);
  EXPECT_EQ(r.rows[0].ocr_excerpt.size(), 240u);
  EXPECT_EQ(utf8_prefix("abc", 120), "abc");

  m.samples.push_back(labeled("a", N, "dup"));
  EXPECT_EQ(code_of([&] { empirical_report([](const Sample&) { return constant_prediction(H); }, m); }),
            Errc::kDuplicateIndex);
  DatasetManifest unlabeled;
  unlabeled.samples = {labeled("u", H, "")};
  unlabeled.samples[0].label.reset();
  EXPECT_EQ(code_of([&] { empirical_report([](const Sample&) { return constant_prediction(H); }, unlabeled); }),
            Errc::kUnlabeledSample);
}

}  // namespace
}  // namespace mmhs

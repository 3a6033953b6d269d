#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "mmhs/error.hpp"
#include "mmhs/evaluator.hpp"

namespace mmhs {
namespace {

struct Series {
  std::string name;
  std::string color;
  std::vector<double> values;
};

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 70;
constexpr double kRight = 150;
constexpr double kTop = 40;
constexpr double kBottom = 55;

// Round-ish tick step covering span with about `target` intervals.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

std::string render_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& series,
                       std::size_t epochs) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double ystep = nice_step(hi - lo, 5);
  lo = std::floor(lo / ystep) * ystep;
  hi = std::ceil(hi / ystep) * ystep;

  const double x_max = std::max<double>(2.0, static_cast<double>(epochs));
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double epoch) { return kLeft + (epoch - 1.0) / (x_max - 1.0) * pw; };
  auto py = [&](double v) { return kTop + (hi - v) / (hi - lo) * ph; };

  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  out += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                     kLeft + pw / 2, title);

  for (double v = lo; v <= hi + ystep * 1e-6; v += ystep) {
    out += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#e0e0e0\"/>\n", kLeft,
                       py(v), kLeft + pw, py(v));
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", kLeft - 6, py(v) + 4,
                       v);
  }
  const double xstep = std::max(1.0, nice_step(x_max - 1.0, 8));
  for (double e = 1.0; e <= x_max + 1e-9; e += xstep) {
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#333\"/>\n", px(e),
                       kTop + ph, kTop + ph + 5);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.0f}</text>\n", px(e),
                       kTop + ph + 18, e);
  }
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", kLeft,
                     kTop, pw, ph);
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">Epoch</text>\n", kLeft + pw / 2,
                     kHeight - 12);
  out += fmt::format(
      "<text x=\"18\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2f})\">{1}</text>\n",
      kTop + ph / 2, y_label);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    std::string points;
    std::string dots;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i])) continue;
      const double x = px(static_cast<double>(i + 1));
      const double y = py(s.values[i]);
      points += fmt::format("{:.2f},{:.2f} ", x, y);
      dots += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"{}\"/>\n", x, y, s.color);
    }
    if (!points.empty()) {
      points.pop_back();
      out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n", s.color,
                         points);
      out += dots;
    }
    const double ly = kTop + 14 + 20.0 * static_cast<double>(k);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" "
                       "stroke-width=\"2\"/>\n",
                       kLeft + pw + 12, ly, kLeft + pw + 36, s.color);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", kLeft + pw + 42, ly + 4, s.name);
  }
  out += "</svg>\n";
  return out;
}

std::string series_csv(const std::vector<Series>& series) {
  std::string out = "epoch";
  for (const auto& s : series) out += "," + s.name;
  out += '\n';
  for (std::size_t i = 0; i < series.front().values.size(); ++i) {
    out += fmt::format("{}", i + 1);
    for (const auto& s : series) out += fmt::format(",{:.17g}", s.values[i]);
    out += '\n';
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.flush();
  if (!out) throw Error(Errc::kUnwritableDirectory, path.parent_path().string());
}

}  // namespace

PlotFiles plot_history(const TrainHistory& history, const std::filesystem::path& out_dir) {
  if (history.empty()) throw Error(Errc::kEmptyHistory, "nothing to plot");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw Error(Errc::kUnwritableDirectory, out_dir.string());

  std::vector<Series> acc{{"train", "#1f77b4", {}}, {"validation", "#d62728", {}}};
  std::vector<Series> loss{{"train", "#1f77b4", {}}, {"validation", "#d62728", {}}};
  for (const auto& r : history.records) {
    acc[0].values.push_back(r.train_accuracy);
    acc[1].values.push_back(r.validation_accuracy);
    loss[0].values.push_back(r.train_loss);
    loss[1].values.push_back(r.validation_loss);
  }

  PlotFiles files{out_dir / "accuracy_vs_epoch.svg", out_dir / "loss_vs_epoch.svg", out_dir / "accuracy_vs_epoch.csv",
                  out_dir / "loss_vs_epoch.csv"};
  write_file(files.accuracy_plot, render_svg("Accuracy vs epoch", "Accuracy", acc, history.size()));
  write_file(files.loss_plot, render_svg("Loss vs epoch", "Weighted cross-entropy", loss, history.size()));
  write_file(files.accuracy_data, series_csv(acc));
  write_file(files.loss_data, series_csv(loss));
  return files;
}

}  // namespace mmhs

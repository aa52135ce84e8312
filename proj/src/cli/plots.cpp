#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "stride/cli.hpp"
#include "stride/eval.hpp"

namespace stride::cli {

namespace {

using training::ForecastRecord;

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 72, kRight = 24, kTop = 44, kBottom = 58;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Range {
  double lo = 0.0, hi = 1.0;

  void include(double v) {
    if (!std::isfinite(v)) return;
    if (empty_) {
      lo = hi = v;
      empty_ = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Range padded() const {
    Range r;
    if (empty_) {
      r.include(0.0);
      r.include(1.0);
      return r;
    }
    r = *this;
    const double span = hi - lo;
    const double pad = span > 0.0 ? span * 0.05 : std::max(1.0, std::abs(lo) * 0.1);
    r.lo -= pad;
    r.hi += pad;
    r.empty_ = false;
    return r;
  }
  bool empty() const { return empty_; }

 private:
  bool empty_ = true;
};

std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= 7.0) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return ticks;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(const std::string& title, const std::string& x_label, const std::string& y_label, Range x, Range y,
      const std::string& comment, const std::vector<double>& x_ticks = {})
      : x_(x.padded()), y_(y.padded()) {
    if (!x_ticks.empty()) {  // fixed grids keep their own extent
      x_ = Range{};
      x_.include(x_ticks.front());
      x_.include(x_ticks.back());
      x_ = x_.padded();
    }
    body_ << fmt::format("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- {} -->\n", esc(comment));
    body_ << fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n",
        kWidth, kHeight, kWidth, kHeight);
    body_ << fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
    body_ << fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", kWidth / 2,
                         esc(title));
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    body_ << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
    body_ << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n", x0, y0, x1, y0);
    body_ << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n", x0, y0, x0, y1);
    body_ << "</g>\n<g class=\"ticks\">\n";
    const auto xt = x_ticks.empty() ? nice_ticks(x_.lo, x_.hi) : x_ticks;
    for (std::size_t i = 0; i < xt.size(); ++i) {
      const double px = sx(xt[i]);
      body_ << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", px, y0,
                           px, y0 + 4);
      // A dense fixed grid gets every other label.
      if (x_ticks.empty() || i % 2 == 0) {
        body_ << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", px, y0 + 16,
                             fmt::format("{:.4g}", xt[i]));
      }
    }
    for (double t : nice_ticks(y_.lo, y_.hi)) {
      const double py = sy(t);
      body_ << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", x0 - 4,
                           py, x0, py);
      body_ << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", x0 - 7, py + 4,
                           fmt::format("{:.4g}", t));
    }
    body_ << "</g>\n";
    body_ << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", (x0 + x1) / 2,
                         kHeight - 18, esc(x_label));
    body_ << fmt::format(
        "<text x=\"18\" y=\"{:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2f})\">{}</text>\n",
        (y0 + y1) / 2, (y0 + y1) / 2, esc(y_label));
  }

  double sx(double v) const { return kLeft + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double sy(double v) const {
    return kHeight - kBottom - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, double width,
                const std::string& attrs = "") {
    body_ << fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{} points=\"", color, width, attrs);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      body_ << fmt::format("{}{:.2f},{:.2f}", i ? " " : "", sx(pts[i].first), sy(pts[i].second));
    }
    body_ << "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& color, double opacity,
               const std::string& attrs = "") {
    body_ << fmt::format("<polygon fill=\"{}\" fill-opacity=\"{}\" stroke=\"none\"{} points=\"", color, opacity, attrs);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      body_ << fmt::format("{}{:.2f},{:.2f}", i ? " " : "", sx(pts[i].first), sy(pts[i].second));
    }
    body_ << "\"/>\n";
  }

  void circle(double x, double y, const std::string& color) {
    body_ << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.2\" fill=\"{}\" fill-opacity=\"0.6\"/>\n", sx(x),
                         sy(y), color);
  }

  void line(double xa, double ya, double xb, double yb, const std::string& color, double width,
            const std::string& attrs = "") {
    body_ << fmt::format(
        "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" stroke-width=\"{}\"{}/>\n",
        sx(xa), sy(ya), sx(xb), sy(yb), color, width, attrs);
  }

  void rect(double xa, double ya, double xb, double yb, const std::string& color) {
    const double px = std::min(sx(xa), sx(xb)), py = std::min(sy(ya), sy(yb));
    body_ << fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" fill-opacity=\"0.35\" "
        "stroke=\"{}\"/>\n",
        px, py, std::abs(sx(xb) - sx(xa)), std::abs(sy(yb) - sy(ya)), color, color);
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    double y = kTop + 6;
    for (const auto& [label, color] : entries) {
      body_ << fmt::format(
          "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n",
          kWidth - kRight - 110, y, color, kWidth - kRight - 96, y + 9, esc(label));
      y += 14;
    }
  }

  std::string finish() {
    body_ << "</svg>\n";
    return body_.str();
  }

 private:
  Range x_, y_;
  std::ostringstream body_;
};

std::vector<double> fh_grid() {
  std::vector<double> g;
  for (int k = 1; k <= training::kHorizons; ++k) g.push_back(training::fh_ms(k));
  return g;
}

std::string unit_of(model::Task task) { return task == model::Task::Cop ? "mm" : "ms"; }
std::string name_of(model::Task task) { return task == model::Task::Cop ? "COP" : "TOI"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string empty_plot(const std::string& title, const std::string& comment) {
  Svg svg(title, "", "", Range{}, Range{}, comment);
  return svg.finish();
}

void scatter_plot(std::span<const ForecastRecord> recs, model::Task task, const std::filesystem::path& path,
                  const std::string& comment) {
  Range x, y;
  for (const auto& r : recs) {
    x.include(r.truth);
    y.include(r.prediction);
    x.include(r.prediction);
    y.include(r.truth);
  }
  const auto u = unit_of(task);
  Svg svg(name_of(task) + ": forecast vs ground truth", "ground truth (" + u + ")", "forecast (" + u + ")", x, y,
          comment);
  const auto px = x.padded();
  svg.line(px.lo, px.lo, px.hi, px.hi, "#999999", 1, " stroke-dasharray=\"4 3\" class=\"identity\"");
  for (const auto& r : recs) svg.circle(r.truth, r.prediction, kPalette[r.fh_frames % 10]);
  write_text(path, svg.finish());
}

void residual_plot(std::span<const ForecastRecord> recs, model::Task task, const std::filesystem::path& path,
                   const std::string& comment) {
  const auto res = eval::residuals(recs);
  std::vector<double> truths;
  Range x, y;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    truths.push_back(recs[i].truth);
    x.include(recs[i].truth);
    y.include(res[i]);
  }
  const auto u = unit_of(task);
  Svg svg(name_of(task) + ": residual r = y - forecast", "ground truth (" + u + ")", "residual (" + u + ")", x, y,
          comment);
  for (std::size_t i = 0; i < recs.size(); ++i) svg.circle(truths[i], res[i], "#1f77b4");
  const bool varies = std::any_of(truths.begin(), truths.end(), [&](double t) { return t != truths.front(); });
  if (truths.size() >= 3 && varies) {
    const auto fit = eval::residual_regression(res, truths);
    const auto px = x.padded();
    svg.line(px.lo, fit.intercept + fit.slope * px.lo, px.hi, fit.intercept + fit.slope * px.hi, "#d62728", 1.5,
             fmt::format(" class=\"fit\" data-slope=\"{}\" data-intercept=\"{}\" data-r-squared=\"{}\"", fit.slope,
                         fit.intercept, fit.r_squared));
  }
  write_text(path, svg.finish());
}

void box_plot(std::span<const ForecastRecord> recs, model::Task task, const std::filesystem::path& path,
              const std::string& comment) {
  Range y;
  std::vector<std::optional<eval::BoxStats>> boxes(training::kHorizons);
  for (int k = 1; k <= training::kHorizons; ++k) {
    const auto sub = eval::filter(recs, task, std::nullopt, k);
    if (sub.empty()) continue;
    const auto r = eval::residuals(sub);
    boxes[static_cast<std::size_t>(k - 1)] = eval::boxplot_stats(r);
    for (double v : r) y.include(v);
  }
  const auto grid = fh_grid();
  Range x;
  x.include(grid.front());
  x.include(grid.back());
  Svg svg(name_of(task) + ": residuals by forecast horizon", "forecast horizon (ms)",
          "residual (" + unit_of(task) + ")", x, y, comment, grid);
  const double half = 4.5;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    if (!boxes[b]) continue;
    const auto& s = *boxes[b];
    const double c = grid[b];
    svg.rect(c - half, s.q1, c + half, s.q3, "#1f77b4");
    svg.line(c - half, s.median, c + half, s.median, "#000000", 1.5);
    svg.line(c, s.q3, c, s.whisker_hi, "#000000", 1);
    svg.line(c, s.q1, c, s.whisker_lo, "#000000", 1);
    for (double o : s.outliers) svg.circle(c, o, "#d62728");
  }
  write_text(path, svg.finish());
}

void ftoi_plot(std::span<const ForecastRecord> recs, const std::filesystem::path& path, const std::string& comment) {
  const auto grid = fh_grid();
  Range x, y;
  x.include(grid.front());
  x.include(grid.back());
  y.include(0.0);
  y.include(grid.back());
  std::set<std::uint16_t> subjects;
  for (const auto& r : recs) subjects.insert(r.subject);
  std::map<std::uint16_t, eval::FhCurve> curves;
  for (auto s : subjects) {
    curves[s] = eval::mean_ftoi_curve(eval::filter(recs, model::Task::Toi, s));
    for (const auto& p : curves[s].points) {
      if (p.value) y.include(*p.value);
    }
  }
  Svg svg("Mean forecast TOI vs forecast horizon", "forecast horizon (ms)", "mean forecast TOI (ms)", x, y, comment,
          grid);
  svg.line(grid.front(), grid.front(), grid.back(), grid.back(), "#000000", 1.2,
           " stroke-dasharray=\"5 3\" class=\"ideal\"");
  std::vector<std::pair<std::string, std::string>> legend{{"ideal", "#000000"}};
  std::size_t i = 0;
  for (const auto& [s, curve] : curves) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve.points) {
      if (p.value) pts.emplace_back(p.fh_ms, *p.value);
    }
    const char* color = kPalette[i++ % 10];
    svg.polyline(pts, color, 1.5, fmt::format(" class=\"subject\" data-subject=\"{}\"", s));
    legend.emplace_back(fmt::format("subject {}", s), color);
  }
  svg.legend(legend);
  write_text(path, svg.finish());
}

void mae_plot(std::span<const eval::MetricRow> rows, model::Task task, const std::filesystem::path& path,
              const std::string& comment) {
  const auto grid = fh_grid();
  Range x, y;
  x.include(grid.front());
  x.include(grid.back());
  y.include(0.0);
  std::map<std::string, std::vector<const eval::MetricRow*>> groups;
  for (const auto& r : rows) {
    if (r.task != task || r.metric != eval::Metric::Mae) continue;
    groups[r.subject].push_back(&r);
    if (r.point.value) y.include(*r.point.value);
    if (r.ci_hi) y.include(*r.ci_hi);
  }
  Svg svg(name_of(task) + ": MAE vs forecast horizon", "forecast horizon (ms)", "MAE (" + unit_of(task) + ")", x, y,
          comment, grid);
  std::vector<std::pair<std::string, std::string>> legend;
  std::size_t i = 0;
  for (const auto& [subject, group] : groups) {
    const bool pooled = subject == "all";
    const std::string color = pooled ? "#000000" : kPalette[i++ % 10];
    std::vector<std::pair<double, double>> upper, lower, pts;
    for (const auto* r : group) {
      if (r->point.value) pts.emplace_back(r->point.fh_ms, *r->point.value);
      if (r->ci_lo && r->ci_hi) {
        upper.emplace_back(r->point.fh_ms, *r->ci_hi);
        lower.emplace_back(r->point.fh_ms, *r->ci_lo);
      }
    }
    if (upper.size() >= 2) {
      std::vector<std::pair<double, double>> band(upper.begin(), upper.end());
      band.insert(band.end(), lower.rbegin(), lower.rend());
      svg.polygon(band, color, pooled ? 0.18 : 0.08, fmt::format(" class=\"ci\" data-subject=\"{}\"", subject));
    }
    svg.polyline(pts, color, pooled ? 2.2 : 1.2, fmt::format(" class=\"mae\" data-subject=\"{}\"", subject));
    legend.emplace_back(pooled ? "all subjects" : "subject " + subject, color);
  }
  svg.legend(legend);
  write_text(path, svg.finish());
}

}  // namespace

PlotResult emit_plots(const PlotInputs& inputs, const std::filesystem::path& out_dir,
                      const std::string& manifest_comment) {
  PlotResult result;
  if (!inputs.records && !inputs.metrics) throw UsageError("plots: give --records and/or --metrics");
  if (inputs.records) {
    std::vector<ForecastRecord> records = training::read_records_csv(*inputs.records);
    if (records.empty()) {
      result.warnings.push_back(inputs.records->string() + " has no records; writing empty axes");
      write_text(out_dir / "records_empty.svg", empty_plot("no records", manifest_comment));
      result.files.push_back("records_empty.svg");
    }
    for (model::Task task : {model::Task::Cop, model::Task::Toi}) {
      const auto recs = eval::filter(records, task);
      if (recs.empty()) continue;
      const std::string t = model::to_string(task);
      scatter_plot(recs, task, out_dir / ("scatter_" + t + ".svg"), manifest_comment);
      residual_plot(recs, task, out_dir / ("residuals_" + t + ".svg"), manifest_comment);
      box_plot(recs, task, out_dir / ("boxplots_" + t + ".svg"), manifest_comment);
      result.files.insert(result.files.end(), {"scatter_" + t + ".svg", "residuals_" + t + ".svg", "boxplots_" + t + ".svg"});
      if (task == model::Task::Toi) {
        ftoi_plot(recs, out_dir / "ftoi.svg", manifest_comment);
        result.files.push_back("ftoi.svg");
      }
    }
  }
  if (inputs.metrics) {
    std::ifstream in(*inputs.metrics);
    if (!in) throw IoError("cannot open " + inputs.metrics->string());
    const auto rows = eval::read_metrics_csv(in);
    bool any = false;
    for (model::Task task : {model::Task::Cop, model::Task::Toi}) {
      if (std::none_of(rows.begin(), rows.end(),
                       [&](const auto& r) { return r.task == task && r.metric == eval::Metric::Mae; })) {
        continue;
      }
      any = true;
      const std::string name = std::string("mae_") + model::to_string(task) + ".svg";
      mae_plot(rows, task, out_dir / name, manifest_comment);
      result.files.push_back(name);
    }
    if (!any) {
      result.warnings.push_back(inputs.metrics->string() + " has no MAE rows; writing empty axes");
      write_text(out_dir / "mae_empty.svg", empty_plot("no MAE rows", manifest_comment));
      result.files.push_back("mae_empty.svg");
    }
  }
  return result;
}

}  // namespace stride::cli

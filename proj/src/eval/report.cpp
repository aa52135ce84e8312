#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "stride/csv.hpp"
#include "stride/eval.hpp"
#include "stride/rng.hpp"

namespace stride::eval {

namespace {

constexpr std::uint64_t kPooledKey = 0xFFFF;

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

void add_group(EvalReport& report, Task task, const SubjectKey& key, std::uint64_t seed_key,
               std::span<const ForecastRecord> records, const EvalOptions& options) {
  const auto mae = mae_by_fh(records);
  const auto rmse = rmse_by_fh(records);
  for (std::size_t b = 0; b < mae.points.size(); ++b) {
    MetricRow row{task, key, Metric::Mae, mae.points[b], std::nullopt, std::nullopt};
    if (row.point.n >= 2) {
      std::vector<double> errors;
      for (const auto& r : records) {
        if (r.fh_frames == row.point.fh_frames) errors.push_back(r.abs_error());
      }
      const auto seed = numerics::derive_seed(options.seed, (static_cast<std::uint64_t>(task) << 32) | seed_key,
                                              static_cast<std::uint64_t>(row.point.fh_frames));
      const auto ci = bootstrap_mae_ci(errors, seed, options.bootstrap_resamples);
      row.ci_lo = ci.lo;
      row.ci_hi = ci.hi;
    }
    report.metrics.push_back(row);
  }
  for (const auto& p : rmse.points) report.metrics.push_back({task, key, Metric::Rmse, p, std::nullopt, std::nullopt});

  std::vector<double> slope_fh, slopes;
  for (int k = 0; k <= kHorizons; ++k) {
    const auto subset = k == 0 ? std::vector<ForecastRecord>(records.begin(), records.end())
                               : filter(records, std::nullopt, std::nullopt, k);
    if (subset.empty()) continue;
    const auto r = residuals(subset);
    std::vector<double> truths;
    for (const auto& rec : subset) truths.push_back(rec.truth);
    RegressionRow row{task, key, k, k == 0 ? 0.0 : training::fh_ms(k), std::nullopt};
    if (subset.size() >= 3 && std::any_of(truths.begin(), truths.end(), [&](double t) { return t != truths[0]; })) {
      row.fit = residual_regression(r, truths);
      if (k > 0) {
        slope_fh.push_back(row.fh_ms);
        slopes.push_back(row.fit->slope);
      }
    }
    report.regressions.push_back(row);
    if (k > 0) report.boxes.push_back({task, key, k, training::fh_ms(k), boxplot_stats(r)});
  }
  if (slopes.size() >= 3) {
    const auto c = slope_fh_correlation(slope_fh, slopes);
    report.summary.push_back({task, key, "slope_fh_pearson_r", c.defined ? std::optional<double>(c.r) : std::nullopt});
  }

  if (task == Task::Toi) {
    const auto curve = mean_ftoi_curve(records);
    for (const auto& p : curve.points) {
      report.metrics.push_back({task, key, Metric::MeanPrediction, p, std::nullopt, std::nullopt});
    }
    std::size_t present = 0;
    for (const auto& p : curve.points) present += p.value ? 1 : 0;
    for (auto it = curve.points.rbegin(); it != curve.points.rend(); ++it) {
      if (it->value) {
        report.summary.push_back({task, key, "ftoi_plateau_ms", it->value});
        break;
      }
    }
    if (present == curve.points.size()) {
      const auto pw = piecewise_fit(curve, options.split_ms);
      report.summary.push_back({task, key, "piecewise_split_ms", pw.split_ms});
      report.summary.push_back({task, key, "piecewise_lower_slope", pw.lower.slope});
      report.summary.push_back({task, key, "piecewise_lower_intercept", pw.lower.intercept});
      report.summary.push_back({task, key, "piecewise_lower_r_squared", pw.lower.r_squared});
      report.summary.push_back({task, key, "piecewise_lower_p_value", pw.lower.p_value});
      report.summary.push_back({task, key, "piecewise_upper_slope", pw.upper.slope});
      report.summary.push_back({task, key, "piecewise_upper_intercept", pw.upper.intercept});
      report.summary.push_back({task, key, "piecewise_upper_r_squared", pw.upper.r_squared});
      report.summary.push_back({task, key, "piecewise_upper_p_value", pw.upper.p_value});
    }
  }
}

void comment_lines(std::ostream& out, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
}

}  // namespace

EvalReport evaluate(std::span<const ForecastRecord> records, const EvalOptions& options) {
  EvalReport report;
  for (Task task : {Task::Cop, Task::Toi}) {
    const auto task_records = filter(records, task);
    if (task_records.empty()) continue;
    std::set<std::uint16_t> subjects;
    for (const auto& r : task_records) subjects.insert(r.subject);
    for (auto s : subjects) add_group(report, task, std::to_string(s), s, filter(task_records, task, s), options);
    add_group(report, task, "all", kPooledKey, task_records, options);
  }
  return report;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows, const std::vector<std::string>& comments) {
  comment_lines(out, comments);
  out << kMetricCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", model::to_string(r.task), r.subject, to_string(r.metric),
                       r.point.fh_frames, r.point.fh_ms, opt(r.point.value), opt(r.ci_lo), opt(r.ci_hi), r.point.n);
  }
}

void write_regressions_csv(std::ostream& out, std::span<const RegressionRow> rows,
                           const std::vector<std::string>& comments) {
  comment_lines(out, comments);
  out << kRegressionCsvHeader << '\n';
  for (const auto& r : rows) {
    if (r.fit) {
      out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", model::to_string(r.task), r.subject, r.fh_frames, r.fh_ms,
                         r.fit->slope, r.fit->intercept, r.fit->r_squared, r.fit->p_value, r.fit->n,
                         r.fit->degenerate ? 1 : 0);
    } else {
      out << fmt::format("{},{},{},{},,,,,,\n", model::to_string(r.task), r.subject, r.fh_frames, r.fh_ms);
    }
  }
}

void write_boxes_csv(std::ostream& out, std::span<const BoxRow> rows, const std::vector<std::string>& comments) {
  comment_lines(out, comments);
  out << kBoxCsvHeader << '\n';
  for (const auto& r : rows) {
    const auto& s = r.stats;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", model::to_string(r.task), r.subject, r.fh_frames,
                       r.fh_ms, s.median, s.q1, s.q3, s.iqr, s.whisker_lo, s.whisker_hi, s.n,
                       fmt::join(s.outliers, ";"));
  }
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows, const std::vector<std::string>& comments) {
  comment_lines(out, comments);
  out << kSummaryCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{}\n", model::to_string(r.task), r.subject, r.quantity, opt(r.value));
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  csv::Reader reader(in, kMetricCsvHeader, "metrics CSV");
  while (auto fields = reader.next()) {
    const auto& f = *fields;
    MetricRow row;
    try {
      row.task = model::parse_task(std::string(f[0]));
      row.metric = parse_metric(std::string(f[2]));
    } catch (const std::invalid_argument& e) {
      reader.fail(e.what());
    }
    row.subject = std::string(f[1]);
    row.point.fh_frames = reader.number<int>(f[3], 3);
    row.point.fh_ms = reader.number<double>(f[4], 4);
    row.point.value = reader.optional_number<double>(f[5], 5);
    row.ci_lo = reader.optional_number<double>(f[6], 6);
    row.ci_hi = reader.optional_number<double>(f[7], 7);
    row.point.n = reader.number<std::size_t>(f[8], 8);
    if (row.point.fh_frames < 1 || row.point.fh_frames > kHorizons) {
      reader.fail("column 4 ('fh_frames'): " + std::to_string(row.point.fh_frames) + " outside [1, 15]");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stride::eval

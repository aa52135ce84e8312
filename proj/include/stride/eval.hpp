#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stride/training.hpp"

namespace stride::eval {

using training::ForecastRecord;
using model::Task;

inline constexpr int kHorizons = training::kHorizons;

enum class Metric { Mae, Rmse, MeanPrediction };
const char* to_string(Metric m);
Metric parse_metric(const std::string& name);

struct FhPoint {
  int fh_frames = 0;
  double fh_ms = 0.0;
  std::optional<double> value;  // absent when the bucket is empty
  std::size_t n = 0;
};

struct FhCurve {
  Metric metric = Metric::Mae;
  std::array<FhPoint, kHorizons> points{};
};

FhCurve mae_by_fh(std::span<const ForecastRecord> records);
FhCurve rmse_by_fh(std::span<const ForecastRecord> records);

/// r = truth − prediction (positive = underprediction).
std::vector<double> residuals(std::span<const ForecastRecord> records);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double p_value = 1.0;  // two-sided t test of the slope
  std::size_t n = 0;
  /// Zero variance in the response: R² and p are reported as 0 and 1.
  bool degenerate = false;
};

/// Ordinary least squares of y on x. Needs n >= 3 and non-constant x.
RegressionFit ols(std::span<const double> x, std::span<const double> y);

/// OLS of residuals on truths.
RegressionFit residual_regression(std::span<const double> residuals, std::span<const double> truths);

struct Correlation {
  double r = 0.0;
  bool defined = false;  // false when either input has zero variance
};

Correlation pearson(std::span<const double> x, std::span<const double> y);

/// Pearson r between forecast horizons and per-horizon regression slopes.
Correlation slope_fh_correlation(std::span<const double> fh_ms, std::span<const double> slopes);

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
  std::vector<double> outliers;  // ascending
  std::size_t n = 0;
};

/// Quantile of sorted data by linear interpolation between closest ranks
/// (h = (n−1)·p).
double quantile_sorted(std::span<const double> sorted, double p);

BoxStats boxplot_stats(std::span<const double> values);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean. The endpoints are the order statistics
/// at floor(α/2·B) and B−1−floor(α/2·B) of the sorted resampled means.
ConfidenceInterval bootstrap_mae_ci(std::span<const double> abs_errors, std::uint64_t seed, std::size_t resamples = 10000,
                                    double level = 0.95);

/// Mean predicted TOI (ms) per horizon. Rejects COP records.
FhCurve mean_ftoi_curve(std::span<const ForecastRecord> records);

/// Per-subject mean prediction at the largest horizon with data.
std::map<std::uint16_t, double> ftoi_plateaus(std::span<const ForecastRecord> records);

struct PiecewiseFit {
  double split_ms = 0.0;
  RegressionFit lower;  // points with fh_ms <= split
  RegressionFit upper;  // points with fh_ms >= split
};

/// Two line fits of a curve's present points, split at `split_ms`; the
/// split point belongs to both segments.
PiecewiseFit piecewise_fit(const FhCurve& curve, double split_ms = 166.67);

std::vector<ForecastRecord> filter(std::span<const ForecastRecord> records, std::optional<Task> task,
                                   std::optional<std::uint16_t> subject = std::nullopt,
                                   std::optional<int> fh_frames = std::nullopt);

// --- whole-run report ---------------------------------------------------------

struct EvalOptions {
  std::uint64_t seed = 0;
  std::size_t bootstrap_resamples = 10000;
  double split_ms = 166.67;
};

/// "all" or the subject id.
using SubjectKey = std::string;

struct MetricRow {
  Task task = Task::Cop;
  SubjectKey subject;
  Metric metric = Metric::Mae;
  FhPoint point;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
};

struct RegressionRow {
  Task task = Task::Cop;
  SubjectKey subject;
  int fh_frames = 0;
  double fh_ms = 0.0;
  std::optional<RegressionFit> fit;  // absent when the truths are constant
};

struct BoxRow {
  Task task = Task::Cop;
  SubjectKey subject;
  int fh_frames = 0;
  double fh_ms = 0.0;
  BoxStats stats;
};

struct SummaryRow {
  Task task = Task::Cop;
  SubjectKey subject;
  std::string quantity;
  std::optional<double> value;
};

struct EvalReport {
  std::vector<MetricRow> metrics;
  std::vector<RegressionRow> regressions;
  std::vector<BoxRow> boxes;
  std::vector<SummaryRow> summary;
};

/// Every table for every (task, subject) present plus the pooled "all"
/// group. Bootstrap CIs are attached to MAE rows.
EvalReport evaluate(std::span<const ForecastRecord> records, const EvalOptions& options);

inline constexpr const char* kMetricCsvHeader = "task,subject,metric,fh_frames,fh_ms,value,ci_lo,ci_hi,n";
inline constexpr const char* kRegressionCsvHeader =
    "task,subject,fh_frames,fh_ms,slope,intercept,r_squared,p_value,n,degenerate";
inline constexpr const char* kBoxCsvHeader =
    "task,subject,fh_frames,fh_ms,median,q1,q3,iqr,whisker_lo,whisker_hi,n,outliers";
inline constexpr const char* kSummaryCsvHeader = "task,subject,quantity,value";

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows, const std::vector<std::string>& comments = {});
void write_regressions_csv(std::ostream& out, std::span<const RegressionRow> rows,
                           const std::vector<std::string>& comments = {});
void write_boxes_csv(std::ostream& out, std::span<const BoxRow> rows, const std::vector<std::string>& comments = {});
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows,
                       const std::vector<std::string>& comments = {});

std::vector<MetricRow> read_metrics_csv(std::istream& in);

}  // namespace stride::eval

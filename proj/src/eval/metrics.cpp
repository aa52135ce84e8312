#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "stride/eval.hpp"
#include "stride/rng.hpp"

namespace stride::eval {

const char* to_string(Metric m) {
  switch (m) {
    case Metric::Mae: return "mae";
    case Metric::Rmse: return "rmse";
    case Metric::MeanPrediction: return "mean_prediction";
  }
  return "?";
}

Metric parse_metric(const std::string& name) {
  if (name == "mae") return Metric::Mae;
  if (name == "rmse") return Metric::Rmse;
  if (name == "mean_prediction") return Metric::MeanPrediction;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

namespace {

FhCurve empty_curve(Metric metric) {
  FhCurve c;
  c.metric = metric;
  for (int k = 1; k <= kHorizons; ++k) {
    c.points[static_cast<std::size_t>(k - 1)].fh_frames = k;
    c.points[static_cast<std::size_t>(k - 1)].fh_ms = training::fh_ms(k);
  }
  return c;
}

std::size_t bucket(const ForecastRecord& r) {
  if (r.fh_frames < 1 || r.fh_frames > kHorizons) {
    throw std::invalid_argument("record horizon " + std::to_string(r.fh_frames) + " outside [1, 15]");
  }
  return static_cast<std::size_t>(r.fh_frames - 1);
}

template <typename Term, typename Finish>
FhCurve per_fh(std::span<const ForecastRecord> records, Metric metric, Term term, Finish finish) {
  auto c = empty_curve(metric);
  std::array<double, kHorizons> sums{};
  for (const auto& r : records) {
    const auto b = bucket(r);
    sums[b] += term(r);
    ++c.points[b].n;
  }
  for (std::size_t b = 0; b < c.points.size(); ++b) {
    if (c.points[b].n > 0) c.points[b].value = finish(sums[b] / static_cast<double>(c.points[b].n));
  }
  return c;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

FhCurve mae_by_fh(std::span<const ForecastRecord> records) {
  return per_fh(
      records, Metric::Mae, [](const ForecastRecord& r) { return std::abs(r.truth - r.prediction); },
      [](double m) { return m; });
}

FhCurve rmse_by_fh(std::span<const ForecastRecord> records) {
  return per_fh(
      records, Metric::Rmse,
      [](const ForecastRecord& r) {
        const double e = r.truth - r.prediction;
        return e * e;
      },
      [](double m) { return std::sqrt(m); });
}

FhCurve mean_ftoi_curve(std::span<const ForecastRecord> records) {
  for (const auto& r : records) {
    if (r.task != Task::Toi) throw std::invalid_argument("mean_ftoi_curve: COP record in a TOI curve");
  }
  return per_fh(
      records, Metric::MeanPrediction, [](const ForecastRecord& r) { return r.prediction; },
      [](double m) { return m; });
}

std::map<std::uint16_t, double> ftoi_plateaus(std::span<const ForecastRecord> records) {
  std::map<std::uint16_t, std::vector<ForecastRecord>> by_subject;
  for (const auto& r : records) by_subject[r.subject].push_back(r);
  std::map<std::uint16_t, double> out;
  for (const auto& [subject, recs] : by_subject) {
    const auto curve = mean_ftoi_curve(recs);
    for (auto it = curve.points.rbegin(); it != curve.points.rend(); ++it) {
      if (it->value) {
        out[subject] = *it->value;
        break;
      }
    }
  }
  return out;
}

std::vector<double> residuals(std::span<const ForecastRecord> records) {
  std::vector<double> r;
  r.reserve(records.size());
  for (const auto& rec : records) r.push_back(rec.truth - rec.prediction);
  return r;
}

namespace {

// Exact test; a summed variance can be a tiny nonzero value for constant data.
bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
}

}  // namespace

RegressionFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("ols: x and y lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("ols: need at least 3 points, got " + std::to_string(n));
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (constant(x)) throw std::invalid_argument("ols: regressor is constant, slope undefined");

  RegressionFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (constant(y)) {
    fit.slope = 0.0;
    fit.intercept = y.front();
    fit.degenerate = true;
    return fit;
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += e * e;
  }
  fit.r_squared = std::clamp(1.0 - sse / syy, 0.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  const double se = std::sqrt(sse / dof / sxx);
  if (se == 0.0) {
    fit.p_value = 0.0;
  } else {
    const double t = std::abs(fit.slope / se);
    boost::math::students_t dist(dof);
    fit.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  }
  return fit;
}

RegressionFit residual_regression(std::span<const double> residuals, std::span<const double> truths) {
  return ols(truths, residuals);
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: lengths differ");
  if (x.size() < 3) throw std::invalid_argument("pearson: need at least 3 points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (constant(x) || constant(y)) return {};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), true};
}

Correlation slope_fh_correlation(std::span<const double> fh_ms, std::span<const double> slopes) {
  return pearson(fh_ms, slopes);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxStats boxplot_stats(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("boxplot_stats: no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  BoxStats s;
  s.n = v.size();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * s.iqr, hi_fence = s.q3 + 1.5 * s.iqr;
  s.whisker_lo = s.q1;
  s.whisker_hi = s.q3;
  bool lo_set = false;
  for (double x : v) {
    if (x < lo_fence || x > hi_fence) {
      s.outliers.push_back(x);
      continue;
    }
    if (!lo_set) {
      s.whisker_lo = x;
      lo_set = true;
    }
    s.whisker_hi = x;
  }
  return s;
}

ConfidenceInterval bootstrap_mae_ci(std::span<const double> abs_errors, std::uint64_t seed, std::size_t resamples,
                                    double level) {
  const std::size_t n = abs_errors.size();
  if (n < 2) throw std::invalid_argument("bootstrap needs at least 2 values, got " + std::to_string(n));
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least 1 resample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level outside (0, 1)");
  std::vector<double> means(resamples);
  numerics::Rng rng(numerics::derive_seed(seed, 0xB007));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += abs_errors[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const auto lo = static_cast<std::size_t>(std::floor((1.0 - level) / 2.0 * static_cast<double>(resamples)));
  return {means[lo], means[resamples - 1 - lo]};
}

PiecewiseFit piecewise_fit(const FhCurve& curve, double split_ms) {
  PiecewiseFit out;
  out.split_ms = split_ms;
  std::vector<double> lx, ly, ux, uy;
  // Grid values are k·1000/60; compare with a small slack so a split given
  // to two decimals (166.67) still lands on the grid point.
  constexpr double kSlack = 0.01;
  for (const auto& p : curve.points) {
    if (!p.value) continue;
    if (p.fh_ms <= split_ms + kSlack) {
      lx.push_back(p.fh_ms);
      ly.push_back(*p.value);
    }
    if (p.fh_ms >= split_ms - kSlack) {
      ux.push_back(p.fh_ms);
      uy.push_back(*p.value);
    }
  }
  out.lower = ols(lx, ly);
  out.upper = ols(ux, uy);
  return out;
}

std::vector<ForecastRecord> filter(std::span<const ForecastRecord> records, std::optional<Task> task,
                                   std::optional<std::uint16_t> subject, std::optional<int> fh_frames) {
  std::vector<ForecastRecord> out;
  for (const auto& r : records) {
    if (task && r.task != *task) continue;
    if (subject && r.subject != *subject) continue;
    if (fh_frames && r.fh_frames != *fh_frames) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace stride::eval

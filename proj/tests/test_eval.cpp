#include <doctest.h>

#include <sstream>

#include "support.hpp"

using namespace stride;
using namespace stride::eval;
using training::ForecastRecord;

namespace {

ForecastRecord rec(int fh, double truth, double prediction, std::uint16_t subject = 1, Task task = Task::Cop) {
  ForecastRecord r;
  r.subject = subject;
  r.task = task;
  r.fh_frames = fh;
  r.fh_ms = training::fh_ms(fh);
  r.truth = truth;
  r.prediction = prediction;
  return r;
}

}  // namespace

TEST_CASE("MAE and RMSE on hand-sized inputs") {
  std::vector<ForecastRecord> recs{rec(3, 10, 6), rec(3, 10, 12)};
  const auto mae = mae_by_fh(recs);
  const auto rmse = rmse_by_fh(recs);
  CHECK(*mae.points[2].value == 3.0);
  CHECK(*rmse.points[2].value == doctest::Approx(std::sqrt(10.0)).epsilon(1e-15));
  CHECK(mae.points[2].n == 2);
  CHECK_FALSE(mae.points[0].value.has_value());
  CHECK(mae.points[14].fh_ms == doctest::Approx(250.0));

  std::vector<ForecastRecord> perfect;
  for (int k = 1; k <= 15; ++k) perfect.push_back(rec(k, 5.0 * k, 5.0 * k));
  for (const auto& p : mae_by_fh(perfect).points) CHECK(*p.value == 0.0);
  CHECK_THROWS_AS(mae_by_fh(std::vector<ForecastRecord>{rec(16, 0, 0)}), std::invalid_argument);
}

TEST_CASE("metric curves match direct re-summation") {
  numerics::Rng rng(11);
  const auto recs = testing::random_records(rng, 9, 3);
  const auto cop = filter(recs, Task::Cop);
  const auto mae = mae_by_fh(cop);
  const auto rmse = rmse_by_fh(cop);
  double prev = 0.0;
  for (int k = 1; k <= 15; ++k) {
    const auto& m = mae.points[static_cast<std::size_t>(k - 1)];
    const auto& r = rmse.points[static_cast<std::size_t>(k - 1)];
    CHECK(*m.value == doctest::Approx(testing::oracle_mean_abs(cop, k)).epsilon(1e-12));
    CHECK(*r.value == doctest::Approx(testing::oracle_rms(cop, k)).epsilon(1e-12));
    CHECK(*m.value <= *r.value);
    double worst = 0.0;
    for (const auto& x : cop) {
      if (x.fh_frames == k) worst = std::max(worst, std::fabs(x.truth - x.prediction));
    }
    CHECK(*r.value <= worst);
    CHECK(m.fh_ms > prev);
    prev = m.fh_ms;
  }
}

TEST_CASE("residual sign and sum") {
  CHECK(residuals(std::vector<ForecastRecord>{rec(6, 100, 102.2)})[0] == doctest::Approx(-2.2).epsilon(1e-12));
  CHECK(residuals(std::vector<ForecastRecord>{rec(6, 100, 90)})[0] > 0.0);
  CHECK(residuals(std::vector<ForecastRecord>{rec(6, 100, 100)})[0] == 0.0);
  numerics::Rng rng(12);
  const auto recs = testing::random_records(rng, 5, 2);
  const auto r = residuals(recs);
  long double sr = 0, st = 0, sp = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    sr += r[i];
    st += recs[i].truth;
    sp += recs[i].prediction;
  }
  CHECK(static_cast<double>(sr) == doctest::Approx(static_cast<double>(st - sp)).epsilon(1e-12));
}

TEST_CASE("residual regression") {
  numerics::Rng rng(13);
  std::vector<double> y(40), r_const(40), r_zero(40, 0.0);
  double mean = 0.0;
  for (auto& v : y) mean += (v = rng.uniform(50, 200));
  mean /= 40.0;
  for (std::size_t i = 0; i < y.size(); ++i) r_const[i] = y[i] - mean;
  const auto a = residual_regression(r_const, y);
  CHECK(a.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.r_squared == doctest::Approx(1.0));

  const auto b = residual_regression(r_zero, y);
  CHECK(b.slope == 0.0);
  CHECK(b.degenerate);
  CHECK(b.r_squared == 0.0);

  std::vector<double> x(60), z(60);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform(-3, 3);
    z[i] = 0.7 * x[i] - 1.2 + rng.normal();
  }
  const auto fit = ols(x, z);
  const auto [slope, intercept] = testing::oracle_line(x, z);
  CHECK(std::fabs(fit.slope - slope) < 1e-10);
  CHECK(std::fabs(fit.intercept - intercept) < 1e-10);
  CHECK(fit.r_squared >= 0.0);
  CHECK(fit.r_squared <= 1.0);
  CHECK(fit.p_value < 1e-6);
  double dot = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = z[i] - fit.intercept - fit.slope * x[i];
    dot += e * x[i];
    scale += std::fabs(e * x[i]);
  }
  CHECK(std::fabs(dot) < 1e-8 * scale);

  CHECK_THROWS_AS(residual_regression(r_const, std::vector<double>(40, 3.0)), std::invalid_argument);
  CHECK_THROWS_AS(ols(std::vector<double>{1, 2}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("slope-horizon correlation") {
  std::vector<double> fh, up, flat(15, 0.3);
  for (int k = 1; k <= 15; ++k) {
    fh.push_back(training::fh_ms(k));
    up.push_back(0.01 * k + 0.2);
  }
  const auto c = slope_fh_correlation(fh, up);
  CHECK(c.defined);
  CHECK(c.r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(slope_fh_correlation(fh, flat).defined);

  numerics::Rng rng(14);
  std::vector<double> a(25), b(25);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    b[i] = 0.5 * a[i] + rng.normal();
  }
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= 25;
  mb /= 25;
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::fabs(pearson(a, b).r - static_cast<double>(sab / std::sqrt(saa * sbb))) < 1e-12);
}

TEST_CASE("box statistics") {
  const auto five = boxplot_stats(std::vector<double>{5, 3, 1, 4, 2});
  CHECK(five.median == 3.0);
  CHECK(five.q1 == 2.0);
  CHECK(five.q3 == 4.0);
  CHECK(five.iqr == 2.0);
  CHECK(five.outliers.empty());

  const auto same = boxplot_stats(std::vector<double>(7, 2.5));
  CHECK(same.iqr == 0.0);
  CHECK(same.outliers.empty());

  const auto one = boxplot_stats(std::vector<double>{9.0});
  CHECK(one.median == 9.0);
  CHECK(one.q1 == 9.0);
  CHECK(one.whisker_hi == 9.0);
  CHECK_THROWS_AS(boxplot_stats(std::vector<double>{}), std::invalid_argument);

  numerics::Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(5 + rng.below(60));
    for (auto& x : v) x = rng.normal() * (rng.below(10) == 0 ? 8.0 : 1.0);
    const auto s = boxplot_stats(v);
    const auto o = testing::oracle_box(v);
    CHECK(s.median == doctest::Approx(o.median).epsilon(1e-14));
    CHECK(s.q1 == doctest::Approx(o.q1).epsilon(1e-14));
    CHECK(s.q3 == doctest::Approx(o.q3).epsilon(1e-14));
    CHECK(s.whisker_lo == o.whisker_lo);
    CHECK(s.whisker_hi == o.whisker_hi);
    CHECK(s.outliers == o.outliers);
    CHECK(s.q1 <= s.median);
    CHECK(s.median <= s.q3);
  }
}

TEST_CASE("bootstrap CI") {
  const auto flat = bootstrap_mae_ci(std::vector<double>(12, 4.5), 1);
  CHECK(flat.lo == 4.5);
  CHECK(flat.hi == 4.5);
  CHECK_THROWS_AS(bootstrap_mae_ci(std::vector<double>{1.0}, 1), std::invalid_argument);

  numerics::Rng rng(16);
  std::vector<double> x(40);
  double mean = 0.0;
  for (auto& v : x) mean += (v = std::fabs(rng.normal()) * 10.0);
  mean /= 40.0;
  const auto ci = bootstrap_mae_ci(x, 77);
  CHECK(ci.lo <= mean);
  CHECK(mean <= ci.hi);
  const auto oracle = testing::oracle_bootstrap(x, 77, 10000, 0.95);
  CHECK(ci.lo == oracle.lo);
  CHECK(ci.hi == oracle.hi);
  const auto again = bootstrap_mae_ci(x, 77);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);
}

TEST_CASE("quadrupling n roughly halves the bootstrap CI width") {
  numerics::Rng rng(17);
  double ratio_sum = 0.0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> small(50), large(200);
    for (auto& v : small) v = std::fabs(rng.normal());
    for (auto& v : large) v = std::fabs(rng.normal());
    const auto a = bootstrap_mae_ci(small, static_cast<std::uint64_t>(rep), 2000);
    const auto b = bootstrap_mae_ci(large, static_cast<std::uint64_t>(rep), 2000);
    ratio_sum += (a.hi - a.lo) / (b.hi - b.lo);
  }
  const double ratio = ratio_sum / reps;
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
}

TEST_CASE("mean fTOI curves and plateaus") {
  std::vector<ForecastRecord> perfect, constant;
  for (std::uint16_t s = 1; s <= 2; ++s) {
    for (int k = 1; k <= 15; ++k) {
      perfect.push_back(rec(k, training::fh_ms(k), training::fh_ms(k), s, Task::Toi));
      constant.push_back(rec(k, training::fh_ms(k), 210.0 + s, s, Task::Toi));
    }
  }
  for (const auto& p : mean_ftoi_curve(perfect).points) CHECK(*p.value == doctest::Approx(p.fh_ms).epsilon(1e-14));
  for (const auto& p : mean_ftoi_curve(constant).points) CHECK(*p.value == doctest::Approx(211.5));
  const auto plateaus = ftoi_plateaus(constant);
  CHECK(plateaus.at(1) == 211.0);
  CHECK(plateaus.at(2) == 212.0);
  CHECK_THROWS_AS(mean_ftoi_curve(std::vector<ForecastRecord>{rec(1, 1, 1)}), std::invalid_argument);

  numerics::Rng rng(18);
  const auto toi = filter(testing::random_records(rng, 6, 2), Task::Toi);
  const auto curve = mean_ftoi_curve(toi);
  for (int k = 1; k <= 15; ++k) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : toi) {
      if (r.fh_frames == k) {
        s += r.prediction;
        ++n;
      }
    }
    CHECK(*curve.points[static_cast<std::size_t>(k - 1)].value == doctest::Approx(s / n).epsilon(1e-12));
  }
}

TEST_CASE("piecewise fit shares the split point") {
  FhCurve c;
  for (int k = 1; k <= 15; ++k) {
    auto& p = c.points[static_cast<std::size_t>(k - 1)];
    p.fh_frames = k;
    p.fh_ms = training::fh_ms(k);
    p.value = p.fh_ms <= 166.67 ? 0.1 * p.fh_ms : 16.667 + 0.5 * (p.fh_ms - 166.667);
    p.n = 1;
  }
  const auto pw = piecewise_fit(c);
  CHECK(pw.lower.n == 10);
  CHECK(pw.upper.n == 6);
  CHECK(pw.lower.slope == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(pw.upper.slope == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("full report covers every group and round-trips metrics") {
  numerics::Rng rng(19);
  const auto recs = testing::random_records(rng, 6, 2);
  EvalOptions opt;
  opt.bootstrap_resamples = 500;
  const auto rep = evaluate(recs, opt);
  // 2 tasks × (2 subjects + all) × 2 metrics × 15 horizons.
  CHECK(rep.metrics.size() >= 2u * 3u * 2u * 15u);
  std::size_t checked = 0;
  for (const auto& row : rep.metrics) {
    if (row.subject != "all" || row.metric != Metric::Mae) continue;
    const auto subset = filter(recs, row.task);
    CHECK(*row.point.value == doctest::Approx(testing::oracle_mean_abs(subset, row.point.fh_frames)).epsilon(1e-12));
    REQUIRE(row.ci_lo.has_value());
    CHECK(*row.ci_lo <= *row.point.value);
    CHECK(*row.point.value <= *row.ci_hi);
    ++checked;
  }
  CHECK(checked == 30);
  // COP truths vary across trials, so each COP row is fitted; at a fixed
  // horizon every TOI truth is the horizon itself, so only the pooled
  // (fh_frames 0) TOI row carries a fit.
  for (const auto& r : rep.regressions) CHECK(r.fit.has_value() == (r.task == Task::Cop || r.fh_frames == 0));

  std::stringstream ss;
  write_metrics_csv(ss, rep.metrics, {"manifest: 0"});
  const auto back = read_metrics_csv(ss);
  REQUIRE(back.size() == rep.metrics.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].subject == rep.metrics[i].subject);
    CHECK(back[i].point.value == rep.metrics[i].point.value);
    CHECK(back[i].ci_hi == rep.metrics[i].ci_hi);
  }
}

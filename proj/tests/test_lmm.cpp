#include <doctest.h>

#include <numeric>
#include <sstream>

#include "support.hpp"

using namespace stride;
using namespace stride::lmm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd ols_beta(const LmmData& d) { return d.X.colPivHouseholderQr().solve(d.y); }

struct RecordSim {
  double intercept = 3.0;  // transformed scale
  double fh = 0.4;         // per standardized unit
  double toe = 0.0;
  double cop = 0.0;
  double torso = 0.0;
  double sd_intercept = 0.25;
  double sd_slope = 0.1;
  double noise = 0.35;
};

/// Records whose |error|^(1/3) follows the mixed model exactly.
std::vector<training::ForecastRecord> simulate_records(numerics::Rng& rng, Task task, const RecordSim& s, int subjects,
                                                       int trials) {
  std::vector<training::ForecastRecord> out;
  const double fh_mean = 133.33, fh_sd = 72.0;
  for (int subj = 1; subj <= subjects; ++subj) {
    const double b0 = s.sd_intercept * rng.normal(), b1 = s.sd_slope * rng.normal();
    for (int t = 0; t < trials; ++t) {
      const double torso = rng.uniform(950, 1550), toe = rng.uniform(2800, 5400), cop = rng.uniform(30, 200);
      for (int k = 1; k <= training::kHorizons; ++k) {
        training::ForecastRecord r;
        r.subject = static_cast<std::uint16_t>(subj);
        r.trial = static_cast<std::uint32_t>(t);
        r.task = task;
        r.fh_frames = k;
        r.fh_ms = training::fh_ms(k);
        r.torso_vel = torso;
        r.toe_vel = toe;
        r.cop_truth_mm = cop;
        const double zf = (r.fh_ms - fh_mean) / fh_sd;
        const double z = s.intercept + b0 + (s.fh + b1) * zf + s.toe * (toe - 4100) / 750 + s.cop * (cop - 115) / 49 +
                         s.torso * (torso - 1250) / 173 + s.noise * rng.normal();
        const double err = std::pow(std::max(z, 0.0), 3.0);
        r.truth = task == Task::Cop ? cop : r.fh_ms;
        r.prediction = r.truth + (rng.below(2) ? err : -err);
        out.push_back(r);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("standardize") {
  const auto s = standardize(std::vector<double>{1, 2, 3});
  CHECK(s.mean == 2.0);
  CHECK(s.sd == 1.0);
  CHECK(s.z == std::vector<double>{-1, 0, 1});
  numerics::Rng rng(1);
  std::vector<double> v(50);
  for (auto& x : v) x = rng.uniform(3000, 5000);
  const auto a = standardize(v);
  const auto b = standardize(a.z);
  CHECK(std::fabs(b.mean) < 1e-12);
  CHECK(b.sd == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(b.z[i] - a.z[i]) < 1e-12);
  CHECK_THROWS_AS(standardize(std::vector<double>{4, 4, 4}), std::invalid_argument);
}

TEST_CASE("cube root and back-transform") {
  CHECK(cube_root_transform(27.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(cube_root_transform(0.0) == 0.0);
  CHECK_THROWS_AS(cube_root_transform(-1.0), std::invalid_argument);
  CHECK(back_transform(2.0, 0.0) == 8.0);
  CHECK(back_transform(0.0, 3.7) == 0.0);
  CHECK(back_transform(1.0, 1.0) == 4.0);
  CHECK_THROWS_AS(back_transform(1.0, -0.1), std::invalid_argument);
  double prev = back_transform(0.0, 0.5);
  for (double mu = 0.1; mu < 5.0; mu += 0.1) {
    const double v = back_transform(mu, 0.5);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("back-transform agrees with a Monte Carlo cubic moment") {
  numerics::Rng rng(2);
  for (auto [mu, s2] : {std::pair{1.0, 1.0}, std::pair{2.5, 0.3}}) {
    const double sd = std::sqrt(s2);
    long double acc = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      const double z = mu + sd * rng.normal();
      acc += z * z * z;
    }
    const double mc = static_cast<double>(acc / n);
    CHECK(std::fabs(mc - back_transform(mu, s2)) < 0.01 * back_transform(mu, s2));
  }
}

TEST_CASE("zero random variance reproduces OLS") {
  numerics::Rng rng(3);
  const auto d = testing::simulate_random_intercept(rng, 8, 30, 2, {1.0, 0.5, -0.3}, 0.0, 1.0, true);
  for (auto crit : {Criterion::Reml, Criterion::Ml}) {
    const auto fit = fit_lmm(d, crit);
    CHECK(fit.convergence.converged);
    const auto b = ols_beta(d);
    for (int j = 0; j < d.p(); ++j) CHECK(std::fabs(fit.beta(j) - b(j)) < 1e-6);
    CHECK(fit.G(0, 0) < 1e-4);
  }
}

TEST_CASE("balanced one-way layout matches ANOVA estimators") {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    numerics::Rng rng(seed);
    const auto d = testing::simulate_random_intercept(rng, 10, 12, 0, {2.0}, 1.5, 1.0);
    const auto a = testing::anova_components(d, 12);
    REQUIRE(a.tau2 > 0.0);
    const auto fit = fit_lmm(d, Criterion::Reml);
    CHECK(fit.convergence.converged);
    CHECK(std::fabs(fit.sigma2 - a.sigma2) < 1e-3 * a.sigma2);
    CHECK(std::fabs(fit.G(0, 0) - a.tau2) < 1e-3 * a.tau2);
  }
}

TEST_CASE("fits are invariant to row order and subject labels") {
  numerics::Rng rng(7);
  const auto recs = simulate_records(rng, Task::Cop, {}, 4, 4);
  const auto d = build_lmm_data(recs, Task::Cop);
  const auto fit = fit_lmm(d, Criterion::Reml);

  auto shuffled = recs;
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  for (auto& r : shuffled) r.subject = static_cast<std::uint16_t>(100 - r.subject);
  const auto g = fit_lmm(build_lmm_data(shuffled, Task::Cop), Criterion::Reml);
  CHECK(g.deviance == doctest::Approx(fit.deviance).epsilon(1e-9));
  for (int j = 0; j < d.p(); ++j) CHECK(g.beta(j) == doctest::Approx(fit.beta(j)).epsilon(1e-6));
  CHECK(g.sigma2 == doctest::Approx(fit.sigma2).epsilon(1e-6));
  for (int i = 0; i < 2; ++i) CHECK(g.G(i, i) == doctest::Approx(fit.G(i, i)).epsilon(1e-4));
}

TEST_CASE("G stays positive semidefinite and deviance never rises along the simplex") {
  numerics::Rng rng(8);
  const auto d = build_lmm_data(simulate_records(rng, Task::Cop, {}, 5, 3), Task::Cop);
  const auto fit = fit_lmm(d, Criterion::Ml);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(fit.G);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  const auto& h = fit.convergence.best_history;
  REQUIRE(h.size() > 2);
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1]);

  numerics::Rng trng(9);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> theta(3);
    for (auto& t : theta) t = trng.uniform(-3, 3);
    CHECK(std::isfinite(profiled_deviance(d, theta, Criterion::Reml)));
  }
}

TEST_CASE("likelihood-ratio test size and power") {
  int rejected = 0;
  const int sims = 500;
  for (int s = 0; s < sims; ++s) {
    numerics::Rng rng(numerics::derive_seed(10, static_cast<std::uint64_t>(s)));
    const auto d = testing::simulate_random_intercept(rng, 20, 100, 2, {1.0, 0.0, 0.5}, 0.7, 1.0);
    const auto tests = fixed_effect_tests(d, fit_lmm(d, Criterion::Ml));
    CHECK(tests[0].lr_statistic >= 0.0);
    if (tests[0].p_value < 0.05) ++rejected;
  }
  const double rate = static_cast<double>(rejected) / sims;
  CHECK(rate >= 0.03);
  CHECK(rate <= 0.07);

  numerics::Rng rng(11);
  const auto d = testing::simulate_random_intercept(rng, 10, 20, 1, {1.0, 10.0}, 0.5, 1.0);
  const auto tests = fixed_effect_tests(d, fit_lmm(d, Criterion::Ml));
  CHECK(tests[0].p_value < 1e-6);
  CHECK_THROWS_AS(fixed_effect_tests(d, fit_lmm(d, Criterion::Reml)), std::invalid_argument);
}

TEST_CASE("drop and refit") {
  numerics::Rng rng(12);
  RecordSim strong;
  strong.toe = 0.3;
  strong.cop = 0.3;
  strong.torso = 0.3;
  const auto recs = simulate_records(rng, Task::Cop, strong, 4, 6);
  const auto d = build_lmm_data(recs, Task::Cop);
  const auto ml = fit_lmm(d, Criterion::Ml);
  const auto tests = fixed_effect_tests(d, ml);
  for (const auto& t : tests) CHECK(t.p_value < 0.05);
  const auto same = drop_and_refit(d, ml, tests, 0.05, Criterion::Ml);
  CHECK(same.dropped.empty());
  CHECK(same.fit.beta == ml.beta);

  RecordSim one = strong;
  one.torso = 0.0;
  numerics::Rng rng2(13);
  const auto d2 = build_lmm_data(simulate_records(rng2, Task::Cop, one, 4, 6), Task::Cop);
  const auto ml2 = fit_lmm(d2, Criterion::Ml);
  auto tests2 = fixed_effect_tests(d2, ml2);
  for (auto& t : tests2) t.p_value = t.name == "torso_vel" ? 0.5 : 0.001;
  const auto r = drop_and_refit(d2, ml2, tests2);
  CHECK(r.dropped == std::vector<std::string>{"torso_vel"});
  CHECK(r.data.p() == d2.p() - 1);
  CHECK(r.fit.criterion == Criterion::Reml);
}

TEST_CASE("TOI-like simulations keep only the horizon effect") {
  // Three null predictors tested independently at 0.05 survive together with
  // probability 0.95³ ≈ 0.857; the band is three binomial SDs (n = 100).
  int only_fh = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    numerics::Rng rng(numerics::derive_seed(14, static_cast<std::uint64_t>(rep)));
    const auto recs = simulate_records(rng, Task::Toi, {}, 6, 4);
    const auto d = build_lmm_data(recs, Task::Toi);
    const auto ml = fit_lmm(d, Criterion::Ml);
    const auto r = drop_and_refit(d, ml, fixed_effect_tests(d, ml));
    if (r.data.names == std::vector<std::string>{"intercept", "fh_ms"}) ++only_fh;
  }
  MESSAGE("intercept + FH only in " << only_fh << " of " << reps);
  const double p = 0.95 * 0.95 * 0.95, sd = std::sqrt(p * (1 - p) / reps);
  CHECK(std::fabs(static_cast<double>(only_fh) / reps - p) <= 3 * sd);
}

TEST_CASE("effect sizes across predictor domains") {
  numerics::Rng rng(15);
  RecordSim s;
  s.toe = -0.1;
  const auto recs = simulate_records(rng, Task::Cop, s, 12, 8);
  const auto d = build_lmm_data(recs, Task::Cop);
  auto fit = fit_lmm(d, Criterion::Reml);
  CHECK(effect_across_domain(fit, "toe_vel", 3500, 3500) == 0.0);
  CHECK_THROWS_AS(effect_across_domain(fit, "missing", 1, 2), std::invalid_argument);

  auto flat = fit;
  flat.beta(flat.column("toe_vel")) = 0.0;
  CHECK(effect_across_domain(flat, "toe_vel", 3000, 5000) == 0.0);

  // Ground truth: the simulation's own back-transformed differential over FH.
  const double fh_mean = 133.33, fh_sd = 72.0;
  auto truth_at = [&](double fh) {
    const double zf = (fh - fh_mean) / fh_sd;
    const double mu = s.intercept + s.fh * zf + s.toe * (d.means[3] - 4100) / 750 + s.cop * (d.means[4] - 115) / 49;
    const double var = s.sd_intercept * s.sd_intercept + s.sd_slope * s.sd_slope * zf * zf + s.noise * s.noise;
    return back_transform(mu, var);
  };
  const double truth = truth_at(250.0) - truth_at(16.67);
  const double est = effect_across_domain(fit, "fh_ms", 16.67, 250.0);
  MESSAGE("FH effect " << est << " vs simulated " << truth);
  CHECK(std::fabs(est - truth) < 0.10 * truth);
}

TEST_CASE("Breusch-Pagan and Jarque-Bera calibration") {
  int bp_null = 0, bp_power = 0, jb_pass = 0;
  const int sims = 500;
  for (int s = 0; s < sims; ++s) {
    numerics::Rng rng(numerics::derive_seed(16, static_cast<std::uint64_t>(s)));
    std::vector<double> fitted(400), homo(400), hetero(400);
    for (std::size_t i = 0; i < fitted.size(); ++i) {
      fitted[i] = rng.uniform(1, 10);
      homo[i] = rng.normal();
      hetero[i] = std::sqrt(fitted[i]) * rng.normal();
    }
    if (breusch_pagan(homo, fitted).p_value < 0.05) ++bp_null;
    if (breusch_pagan(hetero, fitted).p_value < 0.01) ++bp_power;
    if (jarque_bera(homo).p_value > 0.05) ++jb_pass;
  }
  MESSAGE("BP size " << bp_null << ", BP power " << bp_power << ", JB pass " << jb_pass);
  CHECK(bp_null >= 15);
  CHECK(bp_null <= 35);
  CHECK(bp_power >= 475);
  CHECK(jb_pass >= 450);
  CHECK(jb_pass <= 490);
}

TEST_CASE("diagnostics and the full analysis") {
  numerics::Rng rng(17);
  RecordSim s;
  s.toe = -0.15;
  s.cop = 0.1;
  const auto recs = simulate_records(rng, Task::Cop, s, 5, 6);
  const auto a = analyze(recs, Task::Cop);
  CHECK(a.initial_ml.criterion == Criterion::Ml);
  CHECK(a.final_fit.fit.criterion == Criterion::Reml);
  CHECK(a.tests.size() == 4);
  CHECK(a.diagnostics.linearity.size() >= 1);
  CHECK(a.diagnostics.raw_bp_p_value.has_value());
  bool has_fh = false;
  for (const auto& row : a.report) has_fh |= row.term == "fh_ms" && row.effect.has_value();
  CHECK(has_fh);

  std::ostringstream report, diag;
  write_report_csv(report, std::vector<Analysis>{a}, {"manifest: x"});
  write_diagnostics_csv(diag, std::vector<Analysis>{a});
  CHECK(report.str().find(kReportCsvHeader) != std::string::npos);
  CHECK(diag.str().find(kDiagnosticsCsvHeader) != std::string::npos);

  DataOptions opt;
  opt.max_fh_ms = 166.67;
  const auto toi = build_lmm_data(simulate_records(rng, Task::Toi, s, 3, 3), Task::Toi, opt);
  CHECK(toi.n() == 3 * 3 * 10);
  CHECK_THROWS_AS(build_lmm_data(recs, Task::Toi), std::invalid_argument);
}

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "stride/lmm.hpp"

namespace stride::lmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double chi2_sf(double statistic, double dof) {
  if (!(statistic > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), statistic));
}

const std::vector<std::string> kPredictors{"fh_ms", "torso_vel", "toe_vel", "cop_truth_mm"};

double predictor_value(const ForecastRecord& r, const std::string& name) {
  if (name == "fh_ms") return r.fh_ms;
  if (name == "torso_vel") return r.torso_vel;
  if (name == "toe_vel") return r.toe_vel;
  return r.cop_truth_mm;
}

LmmData with_response(const LmmData& data, const VectorXd& y) {
  LmmData out = data;
  out.y = y;
  return out;
}

}  // namespace

LmmData build_lmm_data(std::span<const ForecastRecord> records, Task task, const DataOptions& options) {
  std::vector<ForecastRecord> rows;
  for (const auto& r : records) {
    if (r.task != task) continue;
    if (options.max_fh_ms && r.fh_ms > *options.max_fh_ms + 1e-9) continue;
    rows.push_back(r);
  }
  if (rows.size() < 3) throw std::invalid_argument("build_lmm_data: fewer than 3 records for the task");

  LmmData d;
  d.random = options.random;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.y.resize(n);
  d.raw_abs_error.resize(n);
  std::map<std::uint16_t, int> index;
  for (const auto& r : rows) index.emplace(r.subject, 0);
  int next = 0;
  for (auto& [id, idx] : index) {
    idx = next++;
    d.group_ids.push_back(id);
  }
  d.n_groups = next;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    d.raw_abs_error(i) = r.abs_error();
    d.y(i) = cube_root_transform(r.abs_error());
    d.group.push_back(index.at(r.subject));
  }

  std::vector<Standardized> cols;
  d.names = {"intercept"};
  d.means = {0.0};
  d.sds = {1.0};
  for (const auto& name : kPredictors) {
    std::vector<double> raw;
    raw.reserve(rows.size());
    for (const auto& r : rows) raw.push_back(predictor_value(r, name));
    if (std::all_of(raw.begin(), raw.end(), [&](double v) { return v == raw.front(); })) {
      if (name == "fh_ms") throw std::invalid_argument("build_lmm_data: forecast horizon does not vary");
      d.constant_columns.push_back(name);
      continue;
    }
    cols.push_back(standardize(raw));
    d.names.push_back(name);
    d.means.push_back(cols.back().mean);
    d.sds.push_back(cols.back().sd);
  }
  d.X.resize(n, static_cast<Eigen::Index>(d.names.size()));
  d.X.col(0).setOnes();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) d.X(i, static_cast<Eigen::Index>(c + 1)) = cols[c].z[static_cast<std::size_t>(i)];
  }
  d.slope_column = "fh_ms";
  d.slope_values = d.X.col(d.column("fh_ms"));
  d.validate();
  return d;
}

LmmData without_column(const LmmData& data, const std::string& name) {
  const int c = data.column(name);
  if (c < 0) throw std::invalid_argument("design has no column '" + name + "'");
  if (c == 0) throw std::invalid_argument("the intercept cannot be removed");
  LmmData out = data;
  const auto keep = data.p() - 1;
  out.X.resize(data.n(), keep);
  for (int j = 0, k = 0; j < data.p(); ++j) {
    if (j == c) continue;
    out.X.col(k++) = data.X.col(j);
  }
  out.names.erase(out.names.begin() + c);
  out.means.erase(out.means.begin() + c);
  out.sds.erase(out.sds.begin() + c);
  return out;
}

LmmData with_column(const LmmData& data, const std::string& name, const VectorXd& values) {
  if (values.size() != data.n()) throw std::invalid_argument("with_column: length mismatch");
  LmmData out = data;
  out.X.conservativeResize(Eigen::NoChange, data.p() + 1);
  out.X.col(data.p()) = values;
  out.names.push_back(name);
  out.means.push_back(0.0);
  out.sds.push_back(1.0);
  return out;
}

std::vector<EffectTest> fixed_effect_tests(const LmmData& data, const LmmFit& ml_fit, const FitOptions& options) {
  if (ml_fit.criterion != Criterion::Ml) {
    throw std::invalid_argument("fixed_effect_tests: likelihood-ratio tests need an ML fit");
  }
  std::vector<EffectTest> out;
  for (int j = 1; j < data.p(); ++j) {
    EffectTest t;
    t.name = data.names[static_cast<std::size_t>(j)];
    t.estimate = ml_fit.beta(j);
    const auto sub = fit_lmm(without_column(data, t.name), Criterion::Ml, options);
    t.refit_converged = sub.convergence.converged;
    t.lr_statistic = std::max(0.0, sub.deviance - ml_fit.deviance);
    t.p_value = chi2_sf(t.lr_statistic, 1.0);
    out.push_back(t);
  }
  return out;
}

DropResult drop_and_refit(const LmmData& data, const LmmFit& fit, std::span<const EffectTest> tests, double alpha,
                          Criterion criterion, const FitOptions& options) {
  DropResult out{data, fit, {}};
  for (const auto& t : tests) {
    if (t.name == "intercept" || t.name == "fh_ms") continue;
    if (t.p_value > alpha && out.data.column(t.name) >= 0) {
      out.data = without_column(out.data, t.name);
      out.dropped.push_back(t.name);
    }
  }
  if (!out.dropped.empty() || fit.criterion != criterion) out.fit = fit_lmm(out.data, criterion, options);
  return out;
}

double expected_abs_error(const LmmFit& fit, const std::string& predictor, double x) {
  double mu = fit.beta(0), slope_std = 0.0;
  if (predictor != "intercept") {
    const int c = fit.column(predictor);
    if (c < 0) throw std::invalid_argument("predictor '" + predictor + "' is not in the fitted model");
    const double z = (x - fit.means[static_cast<std::size_t>(c)]) / fit.sds[static_cast<std::size_t>(c)];
    mu += fit.beta(c) * z;
    if (predictor == fit.slope_column) slope_std = z;
  }
  return back_transform(mu, fit.marginal_variance(slope_std));
}

double effect_across_domain(const LmmFit& fit, const std::string& predictor, double a, double b) {
  if (predictor == "intercept") throw std::invalid_argument("the intercept has no domain");
  if (a == b) {
    expected_abs_error(fit, predictor, a);
    return 0.0;
  }
  return expected_abs_error(fit, predictor, b) - expected_abs_error(fit, predictor, a);
}

BreuschPagan breusch_pagan(std::span<const double> residuals, std::span<const double> fitted) {
  const std::size_t n = residuals.size();
  if (n != fitted.size() || n < 3) throw std::invalid_argument("breusch_pagan: need matching samples of size >= 3");
  double mf = 0.0, me = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mf += fitted[i];
    me += residuals[i] * residuals[i];
  }
  mf /= static_cast<double>(n);
  me /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = fitted[i] - mf, dy = residuals[i] * residuals[i] - me;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  BreuschPagan bp;
  if (sxx == 0.0 || syy == 0.0) return bp;
  const double r2 = sxy * sxy / (sxx * syy);
  bp.statistic = static_cast<double>(n) * r2;
  bp.p_value = chi2_sf(bp.statistic, 1.0);
  return bp;
}

JarqueBera jarque_bera(std::span<const double> residuals) {
  const std::size_t n = residuals.size();
  if (n < 3) throw std::invalid_argument("jarque_bera: need at least 3 values");
  double mean = 0.0;
  for (double r : residuals) mean += r;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double r : residuals) {
    const double d = r - mean, d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  JarqueBera jb;
  if (m2 == 0.0) return jb;
  const double skew = m3 / std::pow(m2, 1.5), kurt = m4 / (m2 * m2);
  jb.statistic = static_cast<double>(n) / 6.0 * (skew * skew + (kurt - 3.0) * (kurt - 3.0) / 4.0);
  jb.p_value = chi2_sf(jb.statistic, 2.0);
  return jb;
}

namespace {

BreuschPagan bp_of(const LmmData& data, const LmmFit& fit) {
  const VectorXd e = conditional_residuals(data, fit);
  const VectorXd fitted = data.y - e;
  return breusch_pagan(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())),
                       std::span<const double>(fitted.data(), static_cast<std::size_t>(fitted.size())));
}

}  // namespace

Diagnostics assumption_checks(const LmmData& data, const LmmFit& fit, const FitOptions& options) {
  Diagnostics d;
  const auto bp = bp_of(data, fit);
  d.bp_statistic = bp.statistic;
  d.bp_p_value = bp.p_value;
  const VectorXd e = conditional_residuals(data, fit);
  const auto jb = jarque_bera(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())));
  d.jb_statistic = jb.statistic;
  d.jb_p_value = jb.p_value;

  const LmmFit base = fit.criterion == Criterion::Ml ? fit : fit_lmm(data, Criterion::Ml, options);
  for (int j = 1; j < data.p(); ++j) {
    const auto& name = data.names[static_cast<std::size_t>(j)];
    const VectorXd sq = data.X.col(j).array().square();
    const auto aug = fit_lmm(with_column(data, name + "^2", sq), Criterion::Ml, options);
    LinearityTest t;
    t.name = name;
    t.lr_statistic = std::max(0.0, base.deviance - aug.deviance);
    t.p_value = chi2_sf(t.lr_statistic, 1.0);
    d.linearity.push_back(t);
  }

  if (data.raw_abs_error.size() == data.y.size()) {
    const auto raw = with_response(data, data.raw_abs_error);
    const auto raw_fit = fit_lmm(raw, Criterion::Ml, options);
    d.raw_bp_p_value = bp_of(raw, raw_fit).p_value;
    d.recommend_cube_root = *d.raw_bp_p_value < 0.05;
  }
  return d;
}

std::vector<Domain> default_domains(Task task) {
  if (task == Task::Cop) {
    return {{"fh_ms", 16.67, 250.0}, {"torso_vel", 1000.0, 1500.0}, {"toe_vel", 3000.0, 5000.0},
            {"cop_truth_mm", 53.34, 172.75}};
  }
  return {{"fh_ms", 16.67, 166.67}, {"torso_vel", 1000.0, 1500.0}, {"toe_vel", 3000.0, 5000.0},
          {"cop_truth_mm", 53.34, 172.75}};
}

Analysis analyze(std::span<const ForecastRecord> records, Task task, const AnalysisOptions& options) {
  DataOptions data_options;
  if (task == Task::Toi) data_options.max_fh_ms = options.toi_max_fh_ms;
  const auto data = build_lmm_data(records, task, data_options);

  Analysis a;
  a.task = task;
  a.initial_ml = fit_lmm(data, Criterion::Ml, options.fit);
  a.tests = fixed_effect_tests(data, a.initial_ml, options.fit);
  a.final_fit = drop_and_refit(data, a.initial_ml, a.tests, options.alpha, Criterion::Reml, options.fit);
  a.diagnostics = assumption_checks(a.final_fit.data, a.final_fit.fit, options.fit);

  const auto& fit = a.final_fit.fit;
  std::map<std::string, const EffectTest*> by_name;
  for (const auto& t : a.tests) by_name[t.name] = &t;

  a.report.push_back({task, "intercept", fit.beta(0), std::nullopt, std::nullopt,
                      expected_abs_error(fit, "intercept", 0.0), std::nullopt,
                      "expected |error| with every predictor at its mean"});
  for (const auto& dom : default_domains(task)) {
    ReportRow row{task, dom.predictor, std::nullopt, dom.lo, dom.hi, std::nullopt, std::nullopt, ""};
    if (const auto it = by_name.find(dom.predictor); it != by_name.end()) row.p_value = it->second->p_value;
    if (fit.column(dom.predictor) >= 0) {
      row.estimate = fit.coefficient(dom.predictor);
      row.effect = effect_across_domain(fit, dom.predictor, dom.lo, dom.hi);
    } else if (std::find(a.final_fit.dropped.begin(), a.final_fit.dropped.end(), dom.predictor) !=
               a.final_fit.dropped.end()) {
      row.note = fmt::format("dropped (p > {})", options.alpha);
    } else {
      row.note = "constant in the data";
    }
    a.report.push_back(row);
  }
  const auto q = fit.G.rows();
  if (q >= 1) a.report.push_back({task, "sd_random_intercept", std::sqrt(fit.G(0, 0)), {}, {}, {}, {}, "cube-root scale"});
  if (q == 2) {
    a.report.push_back({task, "sd_random_slope_fh", std::sqrt(fit.G(1, 1)), {}, {}, {}, {}, "cube-root scale"});
    const double denom = std::sqrt(fit.G(0, 0) * fit.G(1, 1));
    a.report.push_back({task, "corr_random", denom > 0.0 ? std::optional<double>(fit.G(1, 0) / denom) : std::nullopt, {},
                        {}, {}, {}, "intercept-slope correlation"});
  }
  a.report.push_back({task, "sd_residual", std::sqrt(fit.sigma2), {}, {}, {}, {}, "cube-root scale"});
  return a;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

void comment_lines(std::ostream& out, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const Analysis> analyses, const std::vector<std::string>& comments) {
  comment_lines(out, comments);
  out << "# p-values: ML likelihood-ratio tests (chi-square, 1 df); effects: E[|error|] = mu^3 + 3 mu s2 "
         "with s2 = zr'G zr + sigma2\n";
  out << kReportCsvHeader << '\n';
  for (const auto& a : analyses) {
    for (const auto& r : a.report) {
      out << fmt::format("{},{},{},{},{},{},{},{}\n", model::to_string(r.task), r.term, opt(r.estimate),
                         opt(r.domain_lo), opt(r.domain_hi), opt(r.effect), opt(r.p_value), r.note);
    }
  }
}

void write_diagnostics_csv(std::ostream& out, std::span<const Analysis> analyses,
                           const std::vector<std::string>& comments) {
  comment_lines(out, comments);
  out << kDiagnosticsCsvHeader << '\n';
  for (const auto& a : analyses) {
    const char* task = model::to_string(a.task);
    const auto& d = a.diagnostics;
    const auto& conv = a.final_fit.fit.convergence;
    out << fmt::format("{},breusch_pagan,{},{},conditional residuals vs fitted\n", task, d.bp_statistic, d.bp_p_value);
    out << fmt::format("{},jarque_bera,{},{},conditional residuals\n", task, d.jb_statistic, d.jb_p_value);
    for (const auto& t : d.linearity) {
      out << fmt::format("{},linearity_{},{},{},LRT of an added squared term\n", task, t.name, t.lr_statistic, t.p_value);
    }
    if (d.raw_bp_p_value) {
      out << fmt::format("{},breusch_pagan_raw_abs_error,,{},{}\n", task, *d.raw_bp_p_value,
                         d.recommend_cube_root ? "heteroscedastic on raw |error|: cube-root transform recommended"
                                               : "raw |error| not detectably heteroscedastic");
    }
    out << fmt::format("{},convergence,{},,{}{}\n", task, conv.evaluations,
                       conv.converged ? "converged" : "NOT converged: ", conv.message);
  }
}

}  // namespace stride::lmm

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stride/training.hpp"

// Gaussian linear mixed model y = Xβ + Z_s b_s + ε with per-subject random
// effects b_s ~ N(0, G), ε ~ N(0, σ²I). G = σ²ΛΛᵀ with Λ lower triangular
// and a log-scaled diagonal, so every iterate is positive semidefinite.

namespace stride::lmm {

using training::ForecastRecord;
using model::Task;

enum class Criterion { Reml, Ml };
const char* to_string(Criterion c);

enum class RandomStructure { None, Intercept, InterceptSlope };

struct Standardized {
  std::vector<double> z;
  double mean = 0.0;
  double sd = 1.0;  // sample SD (n−1)
};

/// Rejects constant or too-short columns.
Standardized standardize(std::span<const double> column);

double cube_root_transform(double abs_error);

/// E[z³] for z ~ N(μ, σ²): μ³ + 3μσ².
double back_transform(double mu, double sigma2);

struct LmmData {
  Eigen::VectorXd y;
  /// Column 0 is the intercept; the rest are standardized predictors.
  Eigen::MatrixXd X;
  std::vector<std::string> names;
  std::vector<double> means;  // raw-unit centring of each X column (0 for the intercept)
  std::vector<double> sds;    // raw-unit scale of each X column (1 for the intercept)
  RandomStructure random = RandomStructure::InterceptSlope;
  /// Random-slope covariate (standardized) and the predictor it came from.
  /// Kept apart from X so the fixed effect can be dropped on its own.
  Eigen::VectorXd slope_values;
  std::string slope_column = "fh_ms";
  std::vector<int> group;  // 0-based group index per row
  int n_groups = 0;
  std::vector<std::uint16_t> group_ids;  // subject id of each group index
  /// |error| before the cube root, when the data came from records.
  Eigen::VectorXd raw_abs_error;
  /// Predictors left out because they were constant in the input.
  std::vector<std::string> constant_columns;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int q() const;
  int column(const std::string& name) const;  // -1 if absent
  /// Random design row i: (1) or (1, slope value).
  Eigen::MatrixXd Z() const;
  void validate() const;
};

struct DataOptions {
  RandomStructure random = RandomStructure::InterceptSlope;
  /// Keep only records with fh_ms at or below this value.
  std::optional<double> max_fh_ms;
};

/// Predictors fh_ms, torso_vel, toe_vel, cop_truth_mm; response |error|^(1/3).
LmmData build_lmm_data(std::span<const ForecastRecord> records, Task task, const DataOptions& options = {});

LmmData without_column(const LmmData& data, const std::string& name);
/// Appends a column (already on the design's scale).
LmmData with_column(const LmmData& data, const std::string& name, const Eigen::VectorXd& values);

struct FitOptions {
  int max_evaluations = 20000;  // per simplex run
  int max_restarts = 6;
  double tolerance = 1e-8;
};

struct Convergence {
  bool converged = true;
  int evaluations = 0;
  int restarts = 0;
  std::string start;     // which start won
  std::string message;   // diagnostic when not converged
  /// Best deviance after each simplex iteration of the winning start.
  std::vector<double> best_history;
};

struct LmmFit {
  Criterion criterion = Criterion::Reml;
  RandomStructure random = RandomStructure::InterceptSlope;
  std::string slope_column = "fh_ms";
  std::vector<std::string> names;
  std::vector<double> means;
  std::vector<double> sds;
  Eigen::VectorXd beta;
  Eigen::MatrixXd G;  // q × q
  double sigma2 = 0.0;
  double deviance = 0.0;  // under `criterion`
  std::vector<double> theta;
  Convergence convergence;
  int n = 0;
  int n_groups = 0;

  int column(const std::string& name) const;
  double coefficient(const std::string& name) const;
  /// Marginal variance zᵣᵀGzᵣ + σ² at a standardized slope value.
  double marginal_variance(double slope_std) const;
};

/// −2·log-likelihood (ML) or −2·restricted log-likelihood (REML) with β
/// and σ² profiled out.
double profiled_deviance(const LmmData& data, std::span<const double> theta, Criterion criterion);

LmmFit fit_lmm(const LmmData& data, Criterion criterion, const FitOptions& options = {});

/// Conditional modes of the random effects (one row per group).
Eigen::MatrixXd random_effects(const LmmData& data, const LmmFit& fit);
/// y − Xβ − Zb̂.
Eigen::VectorXd conditional_residuals(const LmmData& data, const LmmFit& fit);

struct EffectTest {
  std::string name;
  double estimate = 0.0;
  double lr_statistic = 0.0;
  double p_value = 1.0;
  bool refit_converged = true;
};

/// ML likelihood-ratio test (χ²₁) of every non-intercept fixed effect.
std::vector<EffectTest> fixed_effect_tests(const LmmData& data, const LmmFit& ml_fit, const FitOptions& options = {});

struct DropResult {
  LmmData data;
  LmmFit fit;
  std::vector<std::string> dropped;
};

/// One pass: drops every effect with p > alpha except the intercept and FH,
/// then refits under `criterion`. With nothing to drop the input fit is
/// returned unchanged.
DropResult drop_and_refit(const LmmData& data, const LmmFit& fit, std::span<const EffectTest> tests,
                          double alpha = 0.05, Criterion criterion = Criterion::Reml, const FitOptions& options = {});

/// Back-transformed expected |error| at raw predictor value `x` with every
/// other predictor at its mean.
double expected_abs_error(const LmmFit& fit, const std::string& predictor, double x);
/// Change in expected |error| from predictor value a to b.
double effect_across_domain(const LmmFit& fit, const std::string& predictor, double a, double b);

struct LinearityTest {
  std::string name;
  double lr_statistic = 0.0;
  double p_value = 1.0;
};

struct Diagnostics {
  double bp_statistic = 0.0;
  double bp_p_value = 1.0;
  double jb_statistic = 0.0;
  double jb_p_value = 1.0;
  std::vector<LinearityTest> linearity;
  /// Breusch-Pagan p of the same model on untransformed |error|.
  std::optional<double> raw_bp_p_value;
  bool recommend_cube_root = false;
};

struct BreuschPagan {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// n·R² of the OLS of squared residuals on fitted values, against χ²₁.
BreuschPagan breusch_pagan(std::span<const double> residuals, std::span<const double> fitted);

struct JarqueBera {
  double statistic = 0.0;
  double p_value = 1.0;
};

JarqueBera jarque_bera(std::span<const double> residuals);

Diagnostics assumption_checks(const LmmData& data, const LmmFit& fit, const FitOptions& options = {});

// --- report ---------------------------------------------------------------------

struct Domain {
  std::string predictor;
  double lo = 0.0;
  double hi = 0.0;
};

/// Predictor end-points used for effect sizes.
std::vector<Domain> default_domains(Task task);

struct AnalysisOptions {
  double alpha = 0.05;
  /// TOI fits use horizons up to this value.
  double toi_max_fh_ms = 166.67;
  FitOptions fit;
};

struct ReportRow {
  Task task = Task::Cop;
  std::string term;
  std::optional<double> estimate;   // transformed scale
  std::optional<double> domain_lo;
  std::optional<double> domain_hi;
  std::optional<double> effect;     // reporting units
  std::optional<double> p_value;
  std::string note;
};

struct Analysis {
  Task task = Task::Cop;
  LmmFit initial_ml;
  std::vector<EffectTest> tests;
  DropResult final_fit;
  Diagnostics diagnostics;
  std::vector<ReportRow> report;
};

/// Full workflow: cube-root response, ML fit, LRTs, drop-and-refit, REML
/// final fit, effect sizes and diagnostics.
Analysis analyze(std::span<const ForecastRecord> records, Task task, const AnalysisOptions& options = {});

inline constexpr const char* kReportCsvHeader = "task,term,estimate,domain_lo,domain_hi,effect,p_value,note";
inline constexpr const char* kDiagnosticsCsvHeader = "task,check,statistic,p_value,note";

void write_report_csv(std::ostream& out, std::span<const Analysis> analyses, const std::vector<std::string>& comments = {});
void write_diagnostics_csv(std::ostream& out, std::span<const Analysis> analyses,
                           const std::vector<std::string>& comments = {});

}  // namespace stride::lmm

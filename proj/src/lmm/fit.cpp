#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "stride/lmm.hpp"

namespace stride::lmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Criterion c) { return c == Criterion::Reml ? "REML" : "ML"; }

Standardized standardize(std::span<const double> column) {
  const std::size_t n = column.size();
  if (n < 2) throw std::invalid_argument("standardize: need at least 2 values");
  Standardized s;
  s.mean = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : column) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(s.sd > 0.0)) throw std::invalid_argument("standardize: column is constant");
  s.z.reserve(n);
  for (double x : column) s.z.push_back((x - s.mean) / s.sd);
  return s;
}

double cube_root_transform(double abs_error) {
  if (!(abs_error >= 0.0)) throw std::invalid_argument("cube_root_transform: negative or NaN |error|");
  return std::cbrt(abs_error);
}

double back_transform(double mu, double sigma2) {
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("back_transform: negative variance");
  return mu * mu * mu + 3.0 * mu * sigma2;
}

int LmmData::q() const {
  switch (random) {
    case RandomStructure::None: return 0;
    case RandomStructure::Intercept: return 1;
    case RandomStructure::InterceptSlope: return 2;
  }
  return 0;
}

int LmmData::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

MatrixXd LmmData::Z() const {
  MatrixXd z(n(), q());
  if (q() >= 1) z.col(0).setOnes();
  if (q() == 2) z.col(1) = slope_values;
  return z;
}

void LmmData::validate() const {
  if (X.rows() != y.size() || static_cast<int>(group.size()) != n()) {
    throw std::invalid_argument("LmmData: row counts of y, X and group differ");
  }
  if (static_cast<int>(names.size()) != p() || static_cast<int>(means.size()) != p() ||
      static_cast<int>(sds.size()) != p()) {
    throw std::invalid_argument("LmmData: column metadata does not match X");
  }
  if (p() < 1 || names[0] != "intercept") throw std::invalid_argument("LmmData: column 0 must be the intercept");
  if (!y.allFinite() || !X.allFinite()) throw std::invalid_argument("LmmData: non-finite values");
  if (q() == 2 && slope_values.size() != y.size()) {
    throw std::invalid_argument("LmmData: random-slope values do not match the row count");
  }
  if (q() > 0) {
    if (n_groups < 2) throw std::invalid_argument("LmmData: need at least 2 subjects");
    std::vector<int> counts(static_cast<std::size_t>(n_groups), 0);
    for (int g : group) {
      if (g < 0 || g >= n_groups) throw std::invalid_argument("LmmData: group index out of range");
      ++counts[static_cast<std::size_t>(g)];
    }
    for (int c : counts) {
      if (c < 3) throw std::invalid_argument("LmmData: need at least 3 observations per subject");
    }
  }
  if (n() <= p()) throw std::invalid_argument("LmmData: fewer observations than fixed effects");
}

namespace {

// Per-group cross products; the deviance only needs these.
struct GroupBlocks {
  MatrixXd xtx, xtz, ztz;
  VectorXd xty, zty;
  double yty = 0.0;
  int rows = 0;
};

struct Precomputed {
  int n = 0, p = 0, q = 0;
  std::vector<GroupBlocks> groups;
  MatrixXd xtx;
  VectorXd xty;
  double yty = 0.0;
};

Precomputed precompute(const LmmData& data) {
  Precomputed pc;
  pc.n = data.n();
  pc.p = data.p();
  pc.q = data.q();
  const MatrixXd Z = data.Z();
  const int groups = pc.q > 0 ? data.n_groups : 1;
  pc.groups.resize(static_cast<std::size_t>(groups));
  for (auto& g : pc.groups) {
    g.xtx = MatrixXd::Zero(pc.p, pc.p);
    g.xtz = MatrixXd::Zero(pc.p, pc.q);
    g.ztz = MatrixXd::Zero(pc.q, pc.q);
    g.xty = VectorXd::Zero(pc.p);
    g.zty = VectorXd::Zero(pc.q);
  }
  for (int i = 0; i < pc.n; ++i) {
    auto& g = pc.groups[static_cast<std::size_t>(pc.q > 0 ? data.group[static_cast<std::size_t>(i)] : 0)];
    const VectorXd x = data.X.row(i).transpose();
    const VectorXd z = Z.row(i).transpose();
    const double y = data.y(i);
    g.xtx.noalias() += x * x.transpose();
    g.xtz.noalias() += x * z.transpose();
    g.ztz.noalias() += z * z.transpose();
    g.xty += x * y;
    g.zty += z * y;
    g.yty += y * y;
    ++g.rows;
  }
  pc.xtx = MatrixXd::Zero(pc.p, pc.p);
  pc.xty = VectorXd::Zero(pc.p);
  for (const auto& g : pc.groups) {
    pc.xtx += g.xtx;
    pc.xty += g.xty;
    pc.yty += g.yty;
  }
  return pc;
}

MatrixXd lambda_of(std::span<const double> theta, int q) {
  MatrixXd L = MatrixXd::Zero(q, q);
  if (q >= 1) L(0, 0) = std::exp(theta[0]);
  if (q == 2) {
    L(1, 0) = theta[1];
    L(1, 1) = std::exp(theta[2]);
  }
  return L;
}

std::size_t theta_size(int q) { return q == 0 ? 0 : q == 1 ? 1 : 3; }

struct Profiled {
  double deviance = 0.0;
  VectorXd beta;
  double sigma2 = 0.0;
  bool ok = false;
};

Profiled profile(const Precomputed& pc, std::span<const double> theta, Criterion criterion) {
  Profiled out;
  const MatrixXd L = lambda_of(theta, pc.q);
  MatrixXd A = MatrixXd::Zero(pc.p, pc.p);
  VectorXd c = VectorXd::Zero(pc.p);
  double d = 0.0, logdet_m = 0.0;
  for (const auto& g : pc.groups) {
    if (pc.q == 0) {
      A += g.xtx;
      c += g.xty;
      d += g.yty;
      continue;
    }
    const MatrixXd M = MatrixXd::Identity(pc.q, pc.q) + L.transpose() * g.ztz * L;
    const Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) return out;
    const MatrixXd U = g.xtz * L;
    const VectorXd u = L.transpose() * g.zty;
    const MatrixXd MiUt = llt.solve(U.transpose());
    const VectorXd Miu = llt.solve(u);
    A += g.xtx - U * MiUt;
    c += g.xty - U * Miu;
    d += g.yty - u.dot(Miu);
    const MatrixXd R = llt.matrixL();
    for (int k = 0; k < pc.q; ++k) logdet_m += 2.0 * std::log(R(k, k));
  }
  const Eigen::LLT<MatrixXd> a_llt(A);
  if (a_llt.info() != Eigen::Success) return out;
  out.beta = a_llt.solve(c);
  const double rss = std::max(d - c.dot(out.beta), std::numeric_limits<double>::min());
  const double two_pi = 2.0 * 3.14159265358979323846;
  if (criterion == Criterion::Ml) {
    const double n = pc.n;
    out.sigma2 = rss / n;
    out.deviance = logdet_m + n * (1.0 + std::log(two_pi * out.sigma2));
  } else {
    const double dof = pc.n - pc.p;
    const MatrixXd RA = a_llt.matrixL();
    double logdet_a = 0.0;
    for (int k = 0; k < pc.p; ++k) logdet_a += 2.0 * std::log(RA(k, k));
    out.sigma2 = rss / dof;
    out.deviance = logdet_m + logdet_a + dof * (1.0 + std::log(two_pi * out.sigma2));
  }
  out.ok = std::isfinite(out.deviance);
  return out;
}

struct SimplexResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> history;
};

// Nelder-Mead with standard coefficients. Stops when the spread of deviance
// values over the simplex drops below `tol`.
SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                          double step, double tol, int max_evals) {
  const std::size_t dim = x0.size();
  std::vector<std::vector<double>> pts(dim + 1, x0);
  std::vector<double> vals(dim + 1);
  for (std::size_t i = 0; i < dim; ++i) pts[i + 1][i] += step;
  SimplexResult r;
  auto eval = [&](const std::vector<double>& x) {
    ++r.evaluations;
    return f(x);
  };
  for (std::size_t i = 0; i <= dim; ++i) vals[i] = eval(pts[i]);
  std::vector<std::size_t> order(dim + 1);

  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[dim - 1];
    r.history.push_back(vals[best]);
    if (vals[worst] - vals[best] < tol) {
      r.converged = true;
      break;
    }
    if (r.evaluations >= max_evals) break;

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = 0; k <= dim; ++k) {
        if (k != worst) centroid[i] += pts[k][i];
      }
      centroid[i] /= static_cast<double>(dim);
    }
    auto along = [&](double t) {
      std::vector<double> x(dim);
      for (std::size_t i = 0; i < dim; ++i) x[i] = centroid[i] + t * (pts[worst][i] - centroid[i]);
      return x;
    };
    const auto xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const auto xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const auto xc = along(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k <= dim; ++k) {
      if (k == best) continue;
      for (std::size_t i = 0; i < dim; ++i) pts[k][i] = pts[best][i] + 0.5 * (pts[k][i] - pts[best][i]);
      vals[k] = eval(pts[k]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  r.x = pts[best];
  r.f = vals[best];
  return r;
}

std::vector<double> theta_from_g(const MatrixXd& G_rel, int q) {
  // Relative covariance → lower Cholesky factor with a floor on the diagonal.
  MatrixXd S = G_rel;
  const double floor = 1e-6;
  for (int k = 0; k < q; ++k) S(k, k) = std::max(S(k, k), floor);
  Eigen::LLT<MatrixXd> llt(S);
  MatrixXd L;
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
  } else {
    L = S.diagonal().cwiseSqrt().asDiagonal();
  }
  std::vector<double> theta;
  if (q >= 1) theta.push_back(std::log(std::max(L(0, 0), 1e-3)));
  if (q == 2) {
    theta.push_back(L(1, 0));
    theta.push_back(std::log(std::max(L(1, 1), 1e-3)));
  }
  return theta;
}

// Per-subject OLS of the pooled-OLS residuals on Z_s; the spread of those
// coefficients less their average sampling covariance estimates G.
MatrixXd moments_g(const LmmData& data, const Precomputed& pc, const VectorXd& beta_ols, double sigma2) {
  const int q = pc.q;
  std::vector<VectorXd> coefs;
  MatrixXd sampling = MatrixXd::Zero(q, q);
  for (const auto& g : pc.groups) {
    const VectorXd zte = g.zty - g.xtz.transpose() * beta_ols;
    Eigen::FullPivLU<MatrixXd> lu(g.ztz);
    if (!lu.isInvertible()) continue;
    coefs.push_back(lu.solve(zte));
    sampling += sigma2 * lu.inverse();
  }
  (void)data;
  if (coefs.size() < 2) return MatrixXd::Identity(q, q) * 0.1 * sigma2;
  VectorXd mean = VectorXd::Zero(q);
  for (const auto& b : coefs) mean += b;
  mean /= static_cast<double>(coefs.size());
  MatrixXd cov = MatrixXd::Zero(q, q);
  for (const auto& b : coefs) cov += (b - mean) * (b - mean).transpose();
  cov /= static_cast<double>(coefs.size() - 1);
  sampling /= static_cast<double>(coefs.size());
  MatrixXd G = cov - sampling;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
  VectorXd ev = es.eigenvalues().cwiseMax(1e-4 * sigma2);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double profiled_deviance(const LmmData& data, std::span<const double> theta, Criterion criterion) {
  data.validate();
  const auto pc = precompute(data);
  if (theta.size() != theta_size(pc.q)) throw std::invalid_argument("profiled_deviance: wrong theta length");
  const auto p = profile(pc, theta, criterion);
  if (!p.ok) throw std::runtime_error("profiled_deviance: singular system");
  return p.deviance;
}

int LmmFit::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

double LmmFit::coefficient(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw std::invalid_argument("fit has no fixed effect '" + name + "'");
  return beta(c);
}

double LmmFit::marginal_variance(double slope_std) const {
  const auto q = G.rows();
  Eigen::VectorXd z(q);
  if (q >= 1) z(0) = 1.0;
  if (q == 2) z(1) = slope_std;
  return (q > 0 ? z.dot(G * z) : 0.0) + sigma2;
}

LmmFit fit_lmm(const LmmData& data, Criterion criterion, const FitOptions& options) {
  data.validate();
  const auto pc = precompute(data);

  LmmFit fit;
  fit.criterion = criterion;
  fit.random = data.random;
  fit.slope_column = data.slope_column;
  fit.names = data.names;
  fit.means = data.means;
  fit.sds = data.sds;
  fit.n = data.n();
  fit.n_groups = data.n_groups;

  auto objective = [&](std::span<const double> theta) {
    const auto p = profile(pc, theta, criterion);
    return p.ok ? p.deviance : std::numeric_limits<double>::infinity();
  };

  std::vector<double> theta;
  if (pc.q > 0) {
    const std::vector<double> none;
    Precomputed ols_pc = pc;
    ols_pc.q = 0;
    const auto ols = profile(ols_pc, none, Criterion::Ml);
    if (!ols.ok) throw std::runtime_error("fit_lmm: fixed-effect design is rank deficient");
    const double s2 = ols.sigma2 > 0.0 ? ols.sigma2 : 1.0;

    struct Start {
      std::string name;
      std::vector<double> theta;
    };
    const std::vector<Start> starts{
        {"G=0.1I", theta_from_g(MatrixXd::Identity(pc.q, pc.q) * (0.1 / s2), pc.q)},
        {"moments", theta_from_g(moments_g(data, pc, ols.beta, s2) / s2, pc.q)},
    };
    double best_f = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
      Convergence conv;
      conv.start = start.name;
      auto x = start.theta;
      double f = objective(x);
      bool converged = false;
      for (int run = 0; run <= options.max_restarts; ++run) {
        const auto r = nelder_mead(objective, x, 0.5, options.tolerance, options.max_evaluations);
        conv.evaluations += r.evaluations;
        for (double h : r.history) {
          conv.best_history.push_back(conv.best_history.empty() ? h : std::min(conv.best_history.back(), h));
        }
        const double improvement = f - r.f;
        if (r.f <= f) {
          x = r.x;
          f = r.f;
        }
        if (!r.converged) {
          conv.message = "simplex hit the evaluation cap (" + std::to_string(options.max_evaluations) + ")";
          break;
        }
        if (run > 0 && improvement < options.tolerance) {
          converged = true;
          break;
        }
        conv.restarts = run + 1;
      }
      if (!converged && conv.message.empty()) {
        conv.message = "no stable optimum after " + std::to_string(options.max_restarts) + " restarts";
      }
      conv.converged = converged;
      if (f < best_f) {
        best_f = f;
        theta = x;
        fit.convergence = conv;
      }
    }
  }
  const auto best = profile(pc, theta, criterion);
  if (!best.ok) throw std::runtime_error("fit_lmm: deviance not finite at the optimum");
  fit.theta = theta;
  fit.beta = best.beta;
  fit.sigma2 = best.sigma2;
  fit.deviance = best.deviance;
  const MatrixXd L = lambda_of(theta, pc.q);
  fit.G = best.sigma2 * L * L.transpose();
  return fit;
}

MatrixXd random_effects(const LmmData& data, const LmmFit& fit) {
  const auto pc = precompute(data);
  MatrixXd b = MatrixXd::Zero(pc.q > 0 ? data.n_groups : 0, pc.q);
  if (pc.q == 0) return b;
  const MatrixXd L = lambda_of(fit.theta, pc.q);
  for (int s = 0; s < data.n_groups; ++s) {
    const auto& g = pc.groups[static_cast<std::size_t>(s)];
    const MatrixXd M = MatrixXd::Identity(pc.q, pc.q) + L.transpose() * g.ztz * L;
    const VectorXd ztr = g.zty - g.xtz.transpose() * fit.beta;
    b.row(s) = (L * M.llt().solve(L.transpose() * ztr)).transpose();
  }
  return b;
}

VectorXd conditional_residuals(const LmmData& data, const LmmFit& fit) {
  VectorXd e = data.y - data.X * fit.beta;
  if (data.q() == 0) return e;
  const MatrixXd b = random_effects(data, fit);
  const MatrixXd Z = data.Z();
  for (int i = 0; i < data.n(); ++i) e(i) -= Z.row(i).dot(b.row(data.group[static_cast<std::size_t>(i)]));
  return e;
}

}  // namespace stride::lmm

#pragma once

// Shared helpers for the unit tests and the acceptance runner: finite
// difference gradient checks, brute-force metric oracles and LMM simulators.

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "stride/backprop.hpp"
#include "stride/binary_io.hpp"
#include "stride/datagen.hpp"
#include "stride/eval.hpp"
#include "stride/lmm.hpp"
#include "stride/ops.hpp"
#include "stride/rng.hpp"
#include "stride/training.hpp"

namespace stride::testing {

using numerics::Rng;
using numerics::Tensor;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "stride") {
    std::string pattern = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor<T> random_tensor(Rng& rng, numerics::Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// --- gradient checks ----------------------------------------------------------

struct GradReport {
  std::string name;
  double rel_error = 0.0;  // ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)
  std::size_t elements = 0;
};

inline double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline constexpr double kFdStep = 1e-5;

/// Central difference of `loss` with respect to each listed element of `x`.
inline std::vector<double> numeric_gradient(const std::function<double()>& loss, std::span<double> x,
                                            const std::vector<std::size_t>& indices) {
  std::vector<double> g;
  for (std::size_t i : indices) {
    const double saved = x[i];
    x[i] = saved + kFdStep;
    const double up = loss();
    x[i] = saved - kFdStep;
    const double down = loss();
    x[i] = saved;
    g.push_back((up - down) / (2.0 * kFdStep));
  }
  return g;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

inline std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k) {
  if (k >= n) return all_indices(n);
  std::vector<std::size_t> all = all_indices(n);
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

inline GradReport compare(const std::string& name, std::span<const double> analytic, std::span<double> x,
                          const std::vector<std::size_t>& indices, const std::function<double()>& loss) {
  std::vector<double> a;
  for (std::size_t i : indices) a.push_back(analytic[i]);
  const auto n = numeric_gradient(loss, x, indices);
  return {name, rel_error(a, n), indices.size()};
}

inline double weighted_sum(std::span<const double> w, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
  return s;
}

/// Every primitive's adjoint against central differences on random inputs.
inline std::vector<GradReport> op_gradient_checks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradReport> out;

  {  // convolution
    auto x = random_tensor<double>(rng, {2, 5, 6});
    auto k = random_tensor<double>(rng, {3, 2, 3, 3});
    auto b = random_tensor<double>(rng, {3});
    const auto w = random_tensor<double>(rng, {3, 5, 6});
    auto loss = [&] { return weighted_sum(w.values(), numerics::conv2d_same(x, k, b).values()); };
    const auto g = numerics::conv2d_same_backward(x, k, w);
    out.push_back(compare("conv2d input", g.input.values(), x.values(), all_indices(x.size()), loss));
    out.push_back(compare("conv2d kernels", g.kernels.values(), k.values(), all_indices(k.size()), loss));
    out.push_back(compare("conv2d bias", g.bias.values(), b.values(), all_indices(b.size()), loss));
  }
  {  // max pool: distinct values spaced far beyond the step, odd extents
    Tensor<double> x({2, 5, 7});
    auto order = all_indices(x.size());
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i = 0; i < x.size(); ++i) x[order[i]] = 0.01 * static_cast<double>(i) - 0.3;
    const auto probe = numerics::maxpool2(x);
    const auto w = random_tensor<double>(rng, probe.output.shape());
    auto loss = [&] { return weighted_sum(w.values(), numerics::maxpool2(x).output.values()); };
    const auto g = numerics::maxpool2_backward(x.shape(), probe.argmax, w);
    out.push_back(compare("maxpool2 input", g.values(), x.values(), all_indices(x.size()), loss));
  }
  {  // ReLU6 away from its kinks
    Tensor<double> x({40});
    for (auto& v : x.values()) {
      do v = rng.uniform(-2.0, 8.0);
      while (std::abs(v) < 1e-3 || std::abs(v - 6.0) < 1e-3);
    }
    const auto w = random_tensor<double>(rng, {40});
    auto loss = [&] { return weighted_sum(w.values(), numerics::relu6(x).values()); };
    const auto g = numerics::relu6_backward(x, w);
    out.push_back(compare("relu6 input", g.values(), x.values(), all_indices(x.size()), loss));
  }
  {  // recurrent cell
    auto x = random_tensor<double>(rng, {5});
    auto h0 = random_tensor<double>(rng, {4});
    auto wi = random_tensor<double>(rng, {4, 5});
    auto wr = random_tensor<double>(rng, {4, 4});
    auto bi = random_tensor<double>(rng, {4});
    auto br = random_tensor<double>(rng, {4});
    const auto w = random_tensor<double>(rng, {4});
    auto loss = [&] { return weighted_sum(w.values(), numerics::rnn_step(x, h0, wi, wr, bi, br).values()); };
    const auto h = numerics::rnn_step(x, h0, wi, wr, bi, br);
    const auto g = numerics::rnn_step_backward(x, h0, wi, wr, h, w);
    out.push_back(compare("rnn x", g.x.values(), x.values(), all_indices(x.size()), loss));
    out.push_back(compare("rnn h_prev", g.h_prev.values(), h0.values(), all_indices(h0.size()), loss));
    out.push_back(compare("rnn W_in", g.w_in.values(), wi.values(), all_indices(wi.size()), loss));
    out.push_back(compare("rnn W_rec", g.w_rec.values(), wr.values(), all_indices(wr.size()), loss));
    out.push_back(compare("rnn b_in", g.b_in.values(), bi.values(), all_indices(bi.size()), loss));
    out.push_back(compare("rnn b_rec", g.b_rec.values(), br.values(), all_indices(br.size()), loss));
  }
  {  // mean squared error
    auto p = random_tensor<double>(rng, {7});
    const auto t = random_tensor<double>(rng, {7});
    auto loss = [&] { return numerics::mse<double>(p.values(), t.values()); };
    const auto g = numerics::mse_backward<double>(p.values(), t.values());
    out.push_back(compare("mse prediction", g, p.values(), all_indices(p.size()), loss));
  }
  return out;
}

/// A small forecaster with every parameter drawn at random (biases included,
/// so flat image regions do not sit on ReLU6 kinks).
inline model::Forecaster<double> random_micro_model(std::uint64_t seed, model::Task task = model::Task::Cop) {
  model::ForecasterConfig cfg;
  cfg.task = task;
  cfg.block_channels = {2, 3, 2};
  cfg.hidden1 = 4;
  cfg.hidden2 = 3;
  auto m = model::initialize<double>(cfg, seed);
  Rng rng(numerics::derive_seed(seed, 0xB1A5));
  for (std::size_t i = 0; i < model::layout::kTensorCount; ++i) {
    if (m.params()[i].rank() == 1) {
      for (auto& v : m.params()[i].values()) v = rng.uniform(0.05, 0.4);
    }
  }
  return m;
}

inline datagen::Trial noisy_trial(std::uint64_t seed) {
  auto profile = datagen::sample_profile(1, seed, datagen::PersonaSet::Subjects);
  return datagen::generate_trial(profile, datagen::Speed::Medium, datagen::Strike::Mid, seed);
}

/// Sliding-window loss over small continuous-valued frames, assembled from
/// the backprop primitives: mean over horizons of (y_k − t_k)², y_k being the
/// last output of the window that ends `k` frames before the final frame.
struct MicroNetwork {
  model::Forecaster<double> model;
  std::vector<Tensor<double>> frames;
  std::vector<double> targets;  // one per horizon

  int horizons() const { return static_cast<int>(targets.size()); }

  double loss() const {
    std::vector<Tensor<double>> latents;
    for (const auto& f : frames) latents.push_back(model.encode_frame(f));
    const auto w = static_cast<std::size_t>(model.config().window);
    double total = 0.0;
    for (int k = 1; k <= horizons(); ++k) {
      const auto start = static_cast<std::size_t>(horizons() - k);
      const auto out = model.forecast_window(std::span<const Tensor<double>>(latents).subspan(start, w));
      const double d = out.back() - targets[static_cast<std::size_t>(k - 1)];
      total += d * d;
    }
    return total / horizons();
  }

  std::vector<Tensor<double>> gradients() const {
    auto grads = model::zero_gradients(model);
    std::vector<model::FrameTape<double>> tapes;
    std::vector<Tensor<double>> latents;
    for (const auto& f : frames) {
      tapes.push_back(model::encode_frame_tape(model, f));
      latents.push_back(tapes.back().latent);
    }
    const auto m1 = static_cast<std::size_t>(model.config().hidden1);
    const auto w = static_cast<std::size_t>(model.config().window);
    std::vector<double> projected(latents.size() * m1), grad_projected(projected.size(), 0.0);
    model::project_latents<double>(model, latents, projected);
    for (int k = 1; k <= horizons(); ++k) {
      const auto start = static_cast<std::size_t>(horizons() - k);
      const auto tape = model::rnn_forward<double>(model, std::span<const double>(projected).subspan(start * m1, w * m1));
      std::vector<double> grad_out(w, 0.0), gp(w * m1);
      grad_out.back() = 2.0 * (tape.outputs.back() - targets[static_cast<std::size_t>(k - 1)]) / horizons();
      model::rnn_backward<double>(model, tape, grad_out, grads, gp);
      for (std::size_t i = 0; i < gp.size(); ++i) grad_projected[start * m1 + i] += gp[i];
    }
    std::vector<std::vector<double>> grad_latents;
    model::project_latents_backward<double>(model, latents, grad_projected, grads, &grad_latents);
    for (std::size_t t = 0; t < tapes.size(); ++t) model::encode_frame_backward<double>(model, tapes[t], grad_latents[t], grads);
    return grads;
  }

  std::uint64_t signature() const;
};

inline MicroNetwork random_micro_network(std::uint64_t seed) {
  model::ForecasterConfig cfg;
  cfg.height = 8;
  cfg.width = 16;
  cfg.block_channels = {3, 3, 2};
  cfg.hidden1 = 4;
  cfg.hidden2 = 3;
  cfg.window = 4;
  MicroNetwork net{model::initialize<double>(cfg, seed), {}, {}};
  Rng rng(numerics::derive_seed(seed, 0x3E7));
  for (auto& p : net.model.params()) {
    const bool bias = p.rank() == 1;
    for (auto& v : p.values()) v = bias ? rng.uniform(0.05, 0.4) : v * rng.uniform(0.8, 1.6);
  }
  const int horizons = 3;
  for (int f = 0; f < horizons + cfg.window - 1; ++f) {
    net.frames.push_back(random_tensor<double>(rng, {2, 8, 16}, 0.0, 1.0));
  }
  for (int k = 0; k < horizons; ++k) net.targets.push_back(rng.uniform(-0.5, 0.5));
  return net;
}

/// Fingerprint of every ReLU6 region (below 0, linear, saturated) and max-pool
/// choice over `frames`. Equal fingerprints mean the
/// network is one smooth function between the two parameter settings.
inline std::uint64_t frames_signature(const model::Forecaster<double>& m, std::span<const Tensor<double>> frames) {
  std::vector<std::uint8_t> bytes;
  for (const auto& frame : frames) {
    const auto tape = model::encode_frame_tape(m, frame);
    for (const auto& pre : tape.pre_activations) {
      for (double v : pre.values()) bytes.push_back(v <= 0.0 ? 0 : (v >= 6.0 ? 2 : 1));
    }
    for (const auto& arg : tape.pool_argmax) {
      for (auto a : arg) {
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(a >> (8 * b)));
      }
    }
  }
  return fnv1a64(bytes);
}

inline std::uint64_t MicroNetwork::signature() const { return frames_signature(model, frames); }

/// frames_signature over trial frames [first, first + count).
inline std::uint64_t activation_signature(const model::Forecaster<double>& m, const datagen::Trial& trial, int first,
                                          int count) {
  std::vector<Tensor<double>> frames;
  for (int t = first; t < first + count; ++t) {
    frames.push_back(datagen::normalize_frame<double>(trial.frame(static_cast<std::size_t>(t))));
  }
  return frames_signature(m, frames);
}

struct ModelGradReport {
  GradReport grad;
  std::size_t kinks_skipped = 0;       // coordinates whose ±h step crossed a kink
  std::size_t below_resolution = 0;    // gradient too small for a central difference to resolve
};

/// Central differences over sampled coordinates of one tensor, skipping any
/// coordinate whose ±h evaluation changes the activation pattern, and any whose
/// gradient is below 1e6·ε·|L|/h, where loss roundoff alone would exceed a
/// 1e-6 relative error.
inline ModelGradReport compare_smooth(const std::string& name, std::span<const double> analytic, std::span<double> x,
                                      Rng& rng, std::size_t wanted, const std::function<double()>& loss,
                                      const std::function<std::uint64_t()>& signature) {
  const std::uint64_t base = signature();
  std::vector<std::size_t> order = sample_indices(rng, x.size(), x.size());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<double> a, n;
  std::size_t skipped = 0, tiny = 0;
  for (std::size_t i : order) {
    if (a.size() == wanted) break;
    const double saved = x[i];
    x[i] = saved + kFdStep;
    const double up = loss();
    const bool smooth_up = signature() == base;
    x[i] = saved - kFdStep;
    const double down = loss();
    const bool smooth_down = signature() == base;
    x[i] = saved;
    if (!smooth_up || !smooth_down) {
      ++skipped;
      continue;
    }
    const double fd = (up - down) / (2.0 * kFdStep);
    const double resolution = std::numeric_limits<double>::epsilon() * std::max(std::fabs(up), std::fabs(down)) / kFdStep;
    if (std::max(std::fabs(analytic[i]), std::fabs(fd)) < 1e6 * resolution) {
      ++tiny;
      continue;
    }
    a.push_back(analytic[i]);
    n.push_back(fd);
  }
  return {{name, rel_error(a, n), a.size()}, skipped, tiny};
}

/// Whole-network gradients of both training losses against central
/// differences on real trial frames; `per_window` and `per_static` sampled
/// elements per parameter tensor.
inline std::vector<ModelGradReport> model_gradient_checks(std::uint64_t seed, std::size_t per_window,
                                                          std::size_t per_static) {
  std::vector<ModelGradReport> out;
  Rng rng(numerics::derive_seed(seed, 0x6C));
  for (auto task : {model::Task::Cop, model::Task::Toi}) {
    auto m = random_micro_model(seed + static_cast<std::uint64_t>(task), task);
    const auto trial = noisy_trial(numerics::derive_seed(seed, 0x7A, static_cast<std::uint64_t>(task)));
    const auto tag = std::string(model::to_string(task));
    const int first = trial.impact_idx - training::kHorizons - (m.config().window - 1);
    const int count = training::kHorizons + m.config().window - 1;

    const auto w = training::window_loss<double>(m, trial, true);
    auto wloss = [&] { return training::window_loss<double>(m, trial, false).loss; };
    auto wsig = [&] { return activation_signature(m, trial, first, count); };
    for (std::size_t t = 0; t < model::layout::kTensorCount; ++t) {
      out.push_back(compare_smooth(tag + " window loss, tensor " + std::to_string(t), w.grads[t].values(),
                                   m.params()[t].values(), rng, per_window, wloss, wsig));
    }

    const auto s = training::static_context_loss<double>(m, trial, -1);
    auto sloss = [&] { return training::static_context_eval<double>(m, trial); };
    auto ssig = [&] { return activation_signature(m, trial, 0, trial.impact_idx); };
    for (std::size_t t = 0; t < model::layout::kTensorCount; ++t) {
      out.push_back(compare_smooth(tag + " static-context loss, tensor " + std::to_string(t), s.grads[t].values(),
                                   m.params()[t].values(), rng, per_static, sloss, ssig));
    }
  }
  return out;
}

/// Every parameter tensor of a micro network on continuous frames.
inline std::vector<ModelGradReport> network_gradient_checks(std::uint64_t seed, std::size_t per_tensor) {
  auto net = random_micro_network(seed);
  Rng rng(numerics::derive_seed(seed, 0x6D));
  const auto grads = net.gradients();
  std::vector<ModelGradReport> out;
  for (std::size_t t = 0; t < model::layout::kTensorCount; ++t) {
    out.push_back(compare_smooth("network tensor " + std::to_string(t), grads[t].values(), net.model.params()[t].values(),
                                 rng, per_tensor, [&] { return net.loss(); }, [&] { return net.signature(); }));
  }
  return out;
}

// --- metric oracles ---------------------------------------------------------------

inline double oracle_mean_abs(const std::vector<training::ForecastRecord>& recs, int fh) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : recs) {
    if (r.fh_frames != fh) continue;
    s += std::fabs(r.truth - r.prediction);
    ++n;
  }
  return n ? s / n : std::nan("");
}

inline double oracle_rms(const std::vector<training::ForecastRecord>& recs, int fh) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : recs) {
    if (r.fh_frames != fh) continue;
    s += (r.truth - r.prediction) * (r.truth - r.prediction);
    ++n;
  }
  return n ? std::sqrt(s / n) : std::nan("");
}

/// Hyndman-Fan type 7 written from the 1-based definition.
inline double oracle_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = 1.0 + (static_cast<double>(v.size()) - 1.0) * p;
  const auto j = static_cast<std::size_t>(pos);
  const double g = pos - static_cast<double>(j);
  const double a = v[j - 1];
  const double b = j < v.size() ? v[j] : v[j - 1];
  return a + g * (b - a);
}

struct OracleBox {
  double median, q1, q3, whisker_lo, whisker_hi;
  std::vector<double> outliers;
};

inline OracleBox oracle_box(const std::vector<double>& v) {
  OracleBox b;
  b.q1 = oracle_quantile(v, 0.25);
  b.median = oracle_quantile(v, 0.5);
  b.q3 = oracle_quantile(v, 0.75);
  const double iqr = b.q3 - b.q1;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  bool any = false;
  for (double x : v) {
    if (x < b.q1 - 1.5 * iqr || x > b.q3 + 1.5 * iqr) {
      b.outliers.push_back(x);
    } else if (!any) {
      b.whisker_lo = b.whisker_hi = x;
      any = true;
    } else {
      b.whisker_lo = std::min(b.whisker_lo, x);
      b.whisker_hi = std::max(b.whisker_hi, x);
    }
  }
  std::sort(b.outliers.begin(), b.outliers.end());
  return b;
}

/// Percentile bootstrap replayed from the same counter stream, with order
/// statistics picked by selection instead of a full sort.
inline eval::ConfidenceInterval oracle_bootstrap(const std::vector<double>& x, std::uint64_t seed, std::size_t b,
                                                 double level) {
  Rng rng(numerics::derive_seed(seed, 0xB007));
  std::vector<double> means;
  for (std::size_t r = 0; r < b; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[rng.below(x.size())];
    means.push_back(s / static_cast<double>(x.size()));
  }
  const auto k = static_cast<std::size_t>((1.0 - level) / 2.0 * static_cast<double>(b));
  auto lo = means, hi = means;
  std::nth_element(lo.begin(), lo.begin() + static_cast<std::ptrdiff_t>(k), lo.end());
  std::nth_element(hi.begin(), hi.begin() + static_cast<std::ptrdiff_t>(b - 1 - k), hi.end());
  return {lo[k], hi[b - 1 - k]};
}

/// OLS slope and intercept from raw normal equations in long double.
inline std::pair<double, double> oracle_line(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = static_cast<long double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {static_cast<double>(slope), static_cast<double>((sy - slope * sx) / n)};
}

/// Random COP/TOI records over a few subjects and all horizons.
inline std::vector<training::ForecastRecord> random_records(Rng& rng, std::size_t trials_per_subject, int subjects) {
  std::vector<training::ForecastRecord> out;
  for (auto task : {model::Task::Cop, model::Task::Toi}) {
    for (int s = 1; s <= subjects; ++s) {
      for (std::size_t t = 0; t < trials_per_subject; ++t) {
        const double cop = rng.uniform(50.0, 180.0);
        const double torso = rng.uniform(900.0, 1600.0), toe = rng.uniform(2500.0, 5200.0);
        for (int k = 1; k <= training::kHorizons; ++k) {
          training::ForecastRecord r;
          r.subject = static_cast<std::uint16_t>(s);
          r.trial = static_cast<std::uint32_t>(t);
          r.task = task;
          r.fh_frames = k;
          r.fh_ms = training::fh_ms(k);
          r.truth = task == model::Task::Cop ? cop : r.fh_ms;
          r.prediction = r.truth + rng.uniform(-30.0, 30.0) * (1.0 + 0.05 * k);
          r.torso_vel = torso;
          r.toe_vel = toe;
          r.cop_truth_mm = cop;
          out.push_back(r);
        }
      }
    }
  }
  return out;
}

// --- LMM simulation --------------------------------------------------------------

/// Design with an intercept plus `extra` standard-normal predictors, one
/// random intercept per group. `group_sd` is the random-intercept SD.
inline lmm::LmmData simulate_random_intercept(Rng& rng, int groups, int per_group, int extra,
                                              const std::vector<double>& beta, double group_sd, double noise_sd,
                                              bool zero_group_means_of_noise = false) {
  const int n = groups * per_group;
  lmm::LmmData d;
  d.random = lmm::RandomStructure::Intercept;
  d.X.resize(n, 1 + extra);
  d.y.resize(n);
  d.names = {"intercept"};
  d.means = {0.0};
  d.sds = {1.0};
  for (int j = 0; j < extra; ++j) {
    d.names.push_back("x" + std::to_string(j + 1));
    d.means.push_back(0.0);
    d.sds.push_back(1.0);
  }
  d.n_groups = groups;
  std::vector<double> noise(static_cast<std::size_t>(n));
  for (auto& e : noise) e = noise_sd * rng.normal();
  if (zero_group_means_of_noise) {
    for (int g = 0; g < groups; ++g) {
      double m = 0.0;
      for (int i = 0; i < per_group; ++i) m += noise[static_cast<std::size_t>(g * per_group + i)];
      m /= per_group;
      for (int i = 0; i < per_group; ++i) noise[static_cast<std::size_t>(g * per_group + i)] -= m;
    }
  }
  for (int g = 0; g < groups; ++g) {
    d.group_ids.push_back(static_cast<std::uint16_t>(g + 1));
    const double b = group_sd * rng.normal();
    for (int i = 0; i < per_group; ++i) {
      const int row = g * per_group + i;
      d.group.push_back(g);
      d.X(row, 0) = 1.0;
      double mu = beta[0] + b;
      for (int j = 0; j < extra; ++j) {
        d.X(row, j + 1) = rng.normal();
        mu += beta[static_cast<std::size_t>(j + 1)] * d.X(row, j + 1);
      }
      d.y(row) = mu + noise[static_cast<std::size_t>(row)];
    }
  }
  return d;
}

struct AnovaEstimate {
  double sigma2 = 0.0;  // within-group mean square
  double tau2 = 0.0;    // (MSB − MSW) / m
};

/// One-way random-effects ANOVA on y alone (balanced groups).
inline AnovaEstimate anova_components(const lmm::LmmData& d, int per_group) {
  const int g = d.n_groups;
  std::vector<double> means(static_cast<std::size_t>(g), 0.0);
  double grand = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    means[static_cast<std::size_t>(d.group[static_cast<std::size_t>(i)])] += d.y(i) / per_group;
    grand += d.y(i) / d.n();
  }
  double ssw = 0.0, ssb = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    const double r = d.y(i) - means[static_cast<std::size_t>(d.group[static_cast<std::size_t>(i)])];
    ssw += r * r;
  }
  for (double m : means) ssb += per_group * (m - grand) * (m - grand);
  const double msw = ssw / (d.n() - g), msb = ssb / (g - 1);
  return {msw, (msb - msw) / per_group};
}

}  // namespace stride::testing

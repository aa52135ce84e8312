#include <algorithm>
#include <stdexcept>

#include "stride/backprop.hpp"
#include "stride/parallel.hpp"
#include "stride/training.hpp"

namespace stride::training {

using model::FrameTape;
namespace layout = model::layout;

double target_for(Task task, const Trial& trial, int horizon) {
  if (task == Task::Cop) return trial.cop_norm;
  return horizon / static_cast<double>(datagen::kFps);
}

namespace {

template <typename T>
Tensor<T> frame_tensor(const Trial& trial, int t) {
  return datagen::normalize_frame<T>(trial.frame(static_cast<std::size_t>(t)));
}

int first_window_frame(const Trial& trial, int window) { return trial.impact_idx - kHorizons - (window - 1); }

void check_trial(const Trial& trial, int window) {
  if (trial.impact_idx >= trial.n_frames) throw std::invalid_argument("trial impact index lies beyond its frames");
  if (first_window_frame(trial, window) < 0) {
    throw std::invalid_argument("trial too short: impact at frame " + std::to_string(trial.impact_idx) +
                                " leaves no full " + std::to_string(window) + "-frame context for a " +
                                std::to_string(kHorizons) + "-frame horizon");
  }
}

// Forward and backward through the 15 forecast windows over `latents`
// (latents[0] is frame impact−14−W). Adds recurrent and input-projection
// gradients to `grads`; fills grad_latents when non-null.
template <typename T>
double windows_forward_backward(const Forecaster<T>& model, std::span<const Tensor<T>> latents,
                                const std::array<double, kHorizons>& targets,
                                std::array<double, kHorizons>& predictions, std::vector<Tensor<T>>* grads,
                                std::vector<std::vector<T>>* grad_latents) {
  const auto window = static_cast<std::size_t>(model.config().window);
  const auto m1 = static_cast<std::size_t>(model.config().hidden1);
  std::vector<T> projected(latents.size() * m1);
  model::project_latents(model, latents, std::span<T>(projected));
  std::vector<T> grad_projected(grads ? projected.size() : 0, T{0});
  std::vector<T> grad_out(window, T{0}), gp(window * m1);

  double loss = 0.0;
  for (int k = 1; k <= kHorizons; ++k) {
    const std::size_t start = static_cast<std::size_t>(kHorizons - k);
    auto rows = std::span<const T>(projected).subspan(start * m1, window * m1);
    const auto tape = model::rnn_forward(model, rows);
    const double y = static_cast<double>(tape.outputs.back());
    predictions[k - 1] = y;
    const double diff = y - targets[k - 1];
    loss += diff * diff;
    if (!grads) continue;
    grad_out.back() = static_cast<T>(2.0 * diff / kHorizons);
    model::rnn_backward<T>(model, tape, grad_out, *grads, gp);
    for (std::size_t i = 0; i < gp.size(); ++i) grad_projected[start * m1 + i] += gp[i];
  }
  if (grads) model::project_latents_backward<T>(model, latents, grad_projected, *grads, grad_latents);
  return loss / kHorizons;
}

// ∂loss/∂(conv params) for several frames. Per-frame gradients are summed in
// frame order so the result does not depend on the worker count.
template <typename T>
void cnn_backward_frames(const Forecaster<T>& model, std::span<const FrameTape<T>> tapes,
                         const std::vector<std::vector<T>>& grad_latents, std::vector<Tensor<T>>& grads) {
  std::vector<std::vector<Tensor<T>>> per_frame(tapes.size());
  parallel_for(tapes.size(), [&](std::size_t i) {
    auto& g = per_frame[i];
    g.resize(layout::kTensorCount);
    for (std::size_t j = 0; j < layout::kRnn1WIn; ++j) g[j] = Tensor<T>(model.param(j).shape());
    model::encode_frame_backward<T>(model, tapes[i], grad_latents[i], g);
  });
  for (const auto& g : per_frame) {
    for (std::size_t j = 0; j < layout::kRnn1WIn; ++j) {
      T* dst = grads[j].data();
      const T* src = g[j].data();
      for (std::size_t e = 0; e < grads[j].size(); ++e) dst[e] += src[e];
    }
  }
}

template <typename T>
std::vector<FrameTape<T>> tape_frames(const Forecaster<T>& model, const Trial& trial, int first, int count) {
  std::vector<FrameTape<T>> tapes(static_cast<std::size_t>(count));
  parallel_for(tapes.size(), [&](std::size_t i) {
    tapes[i] = model::encode_frame_tape(model, frame_tensor<T>(trial, first + static_cast<int>(i)));
  });
  return tapes;
}

template <typename T>
std::vector<Tensor<T>> encode_frames(const Forecaster<T>& model, const Trial& trial, int first, int count) {
  std::vector<Tensor<T>> latents(static_cast<std::size_t>(count));
  parallel_for(latents.size(), [&](std::size_t i) {
    latents[i] = model.encode_frame(frame_tensor<T>(trial, first + static_cast<int>(i)));
  });
  return latents;
}

template <typename T>
std::array<double, kHorizons> targets_of(Task task, const Trial& trial) {
  std::array<double, kHorizons> y{};
  for (int k = 1; k <= kHorizons; ++k) y[k - 1] = target_for(task, trial, k);
  return y;
}

}  // namespace

template <typename T>
LatentTrial<T> encode_trial(const Forecaster<T>& model, const Trial& trial) {
  const int window = model.config().window;
  check_trial(trial, window);
  LatentTrial<T> lt;
  lt.trial = &trial;
  lt.latents = encode_frames(model, trial, first_window_frame(trial, window), kHorizons + window - 1);
  lt.targets = targets_of<T>(model.task(), trial);
  return lt;
}

template <typename T>
LossResult<T> window_loss_latents(const Forecaster<T>& model, const LatentTrial<T>& trial) {
  LossResult<T> r;
  r.grads = model::zero_gradients(model);
  r.loss = windows_forward_backward<T>(model, trial.latents, trial.targets, r.predictions, &r.grads, nullptr);
  return r;
}

template <typename T>
LossResult<T> window_loss(const Forecaster<T>& model, const Trial& trial, bool cnn_grads) {
  const int window = model.config().window;
  check_trial(trial, window);
  const int first = first_window_frame(trial, window);
  const int count = kHorizons + window - 1;
  const auto targets = targets_of<T>(model.task(), trial);

  LossResult<T> r;
  r.grads = model::zero_gradients(model);
  if (!cnn_grads) {
    const auto latents = encode_frames(model, trial, first, count);
    r.loss = windows_forward_backward<T>(model, latents, targets, r.predictions, &r.grads, nullptr);
    return r;
  }
  const auto tapes = tape_frames(model, trial, first, count);
  std::vector<Tensor<T>> latents;
  latents.reserve(tapes.size());
  for (const auto& tape : tapes) latents.push_back(tape.latent);
  std::vector<std::vector<T>> grad_latents;
  r.loss = windows_forward_backward<T>(model, latents, targets, r.predictions, &r.grads, &grad_latents);
  cnn_backward_frames<T>(model, tapes, grad_latents, r.grads);
  return r;
}

template <typename T>
LossResult<T> static_context_loss(const Forecaster<T>& model, const Trial& trial, int bptt_frames) {
  const int impact = trial.impact_idx;
  if (impact < kHorizons + 1 || impact >= trial.n_frames) {
    throw std::invalid_argument("static_context_loss: impact index " + std::to_string(impact) + " out of range");
  }
  const int loss_begin = impact - kHorizons;
  const int cut = bptt_frames < 0 ? 0 : std::max(0, loss_begin - bptt_frames);
  const auto m1 = static_cast<std::size_t>(model.config().hidden1);

  auto latents = encode_frames(model, trial, 0, cut);
  const auto tapes = tape_frames(model, trial, cut, impact - cut);
  for (const auto& tape : tapes) latents.push_back(tape.latent);

  std::vector<T> projected(latents.size() * m1);
  model::project_latents(model, std::span<const Tensor<T>>(latents), std::span<T>(projected));
  const auto tape = model::rnn_forward(model, std::span<const T>(projected));

  LossResult<T> r;
  r.grads = model::zero_gradients(model);
  std::vector<T> grad_out(tape.steps, T{0});
  double loss = 0.0;
  for (int k = 1; k <= kHorizons; ++k) {
    const auto t = static_cast<std::size_t>(impact - k);
    const double y = static_cast<double>(tape.outputs[t]);
    r.predictions[k - 1] = y;
    const double diff = y - target_for(model.task(), trial, k);
    loss += diff * diff;
    grad_out[t] = static_cast<T>(2.0 * diff / kHorizons);
  }
  r.loss = loss / kHorizons;

  std::vector<T> grad_projected(projected.size());
  model::rnn_backward<T>(model, tape, grad_out, r.grads, grad_projected, static_cast<std::size_t>(cut));
  std::vector<std::vector<T>> grad_latents;
  model::project_latents_backward<T>(model, std::span<const Tensor<T>>(latents).subspan(static_cast<std::size_t>(cut)),
                                     std::span<const T>(grad_projected).subspan(static_cast<std::size_t>(cut) * m1),
                                     r.grads, &grad_latents);
  cnn_backward_frames<T>(model, tapes, grad_latents, r.grads);
  return r;
}

template <typename T>
double static_context_eval(const Forecaster<T>& model, const Trial& trial) {
  const int impact = trial.impact_idx;
  if (impact < kHorizons + 1 || impact >= trial.n_frames) {
    throw std::invalid_argument("static_context_eval: impact index " + std::to_string(impact) + " out of range");
  }
  const auto latents = encode_frames(model, trial, 0, impact);
  std::vector<T> projected(latents.size() * static_cast<std::size_t>(model.config().hidden1));
  model::project_latents(model, std::span<const Tensor<T>>(latents), std::span<T>(projected));
  const auto tape = model::rnn_forward(model, std::span<const T>(projected));
  double loss = 0.0;
  for (int k = 1; k <= kHorizons; ++k) {
    const double diff = static_cast<double>(tape.outputs[static_cast<std::size_t>(impact - k)]) -
                        target_for(model.task(), trial, k);
    loss += diff * diff;
  }
  return loss / kHorizons;
}

template <typename T>
std::array<double, kHorizons> window_predictions(const Forecaster<T>& model, const LatentTrial<T>& trial) {
  std::array<double, kHorizons> p{};
  windows_forward_backward<T>(model, trial.latents, trial.targets, p, nullptr, nullptr);
  return p;
}

#define STRIDE_INSTANTIATE_LOSSES(T)                                                                    \
  template LatentTrial<T> encode_trial<T>(const Forecaster<T>&, const Trial&);                          \
  template LossResult<T> window_loss_latents<T>(const Forecaster<T>&, const LatentTrial<T>&);           \
  template LossResult<T> window_loss<T>(const Forecaster<T>&, const Trial&, bool);                      \
  template LossResult<T> static_context_loss<T>(const Forecaster<T>&, const Trial&, int);               \
  template double static_context_eval<T>(const Forecaster<T>&, const Trial&);                           \
  template std::array<double, kHorizons> window_predictions<T>(const Forecaster<T>&, const LatentTrial<T>&);

STRIDE_INSTANTIATE_LOSSES(float)
STRIDE_INSTANTIATE_LOSSES(double)

#undef STRIDE_INSTANTIATE_LOSSES

}  // namespace stride::training

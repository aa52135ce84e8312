#include "stride/backprop.hpp"

namespace stride::model {

using numerics::ShapeError;

template <typename T>
FrameTape<T> encode_frame_tape(const Forecaster<T>& model, const Tensor<T>& frame) {
  const auto& cfg = model.config();
  numerics::require_shape(frame.shape(),
                          {static_cast<std::size_t>(cfg.channels), static_cast<std::size_t>(cfg.height),
                           static_cast<std::size_t>(cfg.width)},
                          "encode_frame_tape input");
  FrameTape<T> tape;
  Tensor<T> x = frame;
  for (int b = 0; b < ForecasterConfig::kBlocks; ++b) {
    for (int c = 0; c < ForecasterConfig::kConvsPerBlock; ++c) {
      const int l = b * ForecasterConfig::kConvsPerBlock + c;
      tape.conv_inputs[l] = std::move(x);
      tape.pre_activations[l] = numerics::conv2d_same(tape.conv_inputs[l], model.param(layout::conv_kernels(l)),
                                                      model.param(layout::conv_bias(l)));
      x = tape.pre_activations[l];
      numerics::relu6_inplace(x);
    }
    tape.pool_input_shapes[b] = x.shape();
    auto pooled = numerics::maxpool2(x);
    tape.pool_argmax[b] = std::move(pooled.argmax);
    x = std::move(pooled.output);
  }
  tape.latent = x.reshaped({x.size()});
  return tape;
}

template <typename T>
void encode_frame_backward(const Forecaster<T>& model, const FrameTape<T>& tape,
                           std::span<const T> grad_latent, std::vector<Tensor<T>>& grads) {
  const auto& cfg = model.config();
  if (grad_latent.size() != static_cast<std::size_t>(cfg.latent_size())) {
    throw ShapeError("encode_frame_backward: latent gradient has wrong length");
  }
  const std::size_t last = ForecasterConfig::kBlocks - 1;
  Tensor<T> g({static_cast<std::size_t>(cfg.block_channels[last]), static_cast<std::size_t>(cfg.block_height(3)),
               static_cast<std::size_t>(cfg.block_width(3))},
              std::vector<T>(grad_latent.begin(), grad_latent.end()));
  for (int b = ForecasterConfig::kBlocks - 1; b >= 0; --b) {
    g = numerics::maxpool2_backward<T>(tape.pool_input_shapes[b], tape.pool_argmax[b], g);
    for (int c = ForecasterConfig::kConvsPerBlock - 1; c >= 0; --c) {
      const int l = b * ForecasterConfig::kConvsPerBlock + c;
      g = numerics::relu6_backward(tape.pre_activations[l], g);
      const bool need_input = l > 0;
      Tensor<T> grad_input;
      if (need_input) grad_input = Tensor<T>(tape.conv_inputs[l].shape());
      numerics::conv2d_same_backward_accumulate(tape.conv_inputs[l], model.param(layout::conv_kernels(l)), g,
                                                need_input ? &grad_input : nullptr,
                                                grads[layout::conv_kernels(l)], grads[layout::conv_bias(l)]);
      if (need_input) g = std::move(grad_input);
    }
  }
}

template <typename T>
void project_latents(const Forecaster<T>& model, std::span<const Tensor<T>> latents, std::span<T> out) {
  const auto m1 = static_cast<std::size_t>(model.config().hidden1);
  if (out.size() != latents.size() * m1) throw ShapeError("project_latents: output buffer has wrong size");
  for (std::size_t t = 0; t < latents.size(); ++t) {
    numerics::rnn_project_input<T>(model.param(layout::kRnn1WIn), model.param(layout::kRnn1BIn),
                                   latents[t].values(), out.subspan(t * m1, m1));
  }
}

template <typename T>
void project_latents_backward(const Forecaster<T>& model, std::span<const Tensor<T>> latents,
                              std::span<const T> grad_projected, std::vector<Tensor<T>>& grads,
                              std::vector<std::vector<T>>* grad_latents) {
  const auto m1 = static_cast<std::size_t>(model.config().hidden1);
  const auto n = static_cast<std::size_t>(model.config().latent_size());
  if (grad_projected.size() != latents.size() * m1) {
    throw ShapeError("project_latents_backward: gradient buffer has wrong size");
  }
  if (grad_latents) grad_latents->assign(latents.size(), std::vector<T>(n, T{0}));
  auto& gb = grads[layout::kRnn1BIn];
  for (std::size_t t = 0; t < latents.size(); ++t) {
    auto d = grad_projected.subspan(t * m1, m1);
    numerics::outer_accumulate<T>(d, latents[t].values(), grads[layout::kRnn1WIn]);
    for (std::size_t i = 0; i < m1; ++i) gb[i] += d[i];
    if (grad_latents) {
      numerics::matvec_transposed_accumulate<T>(model.param(layout::kRnn1WIn), d, (*grad_latents)[t]);
    }
  }
}

template <typename T>
RnnTape<T> rnn_forward(const Forecaster<T>& model, std::span<const T> projected) {
  const auto m1 = static_cast<std::size_t>(model.config().hidden1);
  const auto m2 = static_cast<std::size_t>(model.config().hidden2);
  if (projected.size() % m1 != 0) throw ShapeError("rnn_forward: projected input length is not a multiple of hidden1");
  RnnTape<T> tape;
  tape.steps = projected.size() / m1;
  tape.h1.assign(tape.steps * m1, T{0});
  tape.h2.assign(tape.steps * m2, T{0});
  tape.outputs.assign(tape.steps, T{0});
  const std::vector<T> zeros1(m1, T{0}), zeros2(m2, T{0});
  std::vector<T> u2(m2);
  const T inv_m2 = T{1} / static_cast<T>(m2);
  for (std::size_t t = 0; t < tape.steps; ++t) {
    std::span<const T> h1_prev = t ? std::span<const T>(tape.h1).subspan((t - 1) * m1, m1) : std::span<const T>(zeros1);
    std::span<const T> h2_prev = t ? std::span<const T>(tape.h2).subspan((t - 1) * m2, m2) : std::span<const T>(zeros2);
    auto h1 = std::span<T>(tape.h1).subspan(t * m1, m1);
    auto h2 = std::span<T>(tape.h2).subspan(t * m2, m2);
    numerics::rnn_step_projected<T>(projected.subspan(t * m1, m1), h1_prev, model.param(layout::kRnn1WRec),
                                    model.param(layout::kRnn1BRec), h1);
    numerics::rnn_project_input<T>(model.param(layout::kRnn2WIn), model.param(layout::kRnn2BIn), h1, u2);
    numerics::rnn_step_projected<T>(u2, h2_prev, model.param(layout::kRnn2WRec), model.param(layout::kRnn2BRec), h2);
    tape.outputs[t] = numerics::sum<T>(h2) * inv_m2;
  }
  return tape;
}

template <typename T>
void rnn_backward(const Forecaster<T>& model, const RnnTape<T>& tape, std::span<const T> grad_outputs,
                  std::vector<Tensor<T>>& grads, std::span<T> grad_projected, std::size_t stop_step) {
  const auto m1 = static_cast<std::size_t>(model.config().hidden1);
  const auto m2 = static_cast<std::size_t>(model.config().hidden2);
  if (grad_outputs.size() != tape.steps || grad_projected.size() != tape.steps * m1) {
    throw ShapeError("rnn_backward: gradient buffers do not match the tape");
  }
  std::fill(grad_projected.begin(), grad_projected.end(), T{0});
  std::size_t last = tape.steps;
  while (last > 0 && grad_outputs[last - 1] == T{0}) --last;
  if (last == 0) return;

  const std::vector<T> zeros1(m1, T{0}), zeros2(m2, T{0});
  std::vector<T> dh1_next(m1, T{0}), dh2_next(m2, T{0});
  std::vector<T> dh1(m1), dh2(m2), delta1(m1), delta2(m2);
  const T inv_m2 = T{1} / static_cast<T>(m2);
  const auto& w_rec1 = model.param(layout::kRnn1WRec);
  const auto& w_in2 = model.param(layout::kRnn2WIn);
  const auto& w_rec2 = model.param(layout::kRnn2WRec);

  for (std::size_t t = last; t-- > stop_step;) {
    std::span<const T> h1 = std::span<const T>(tape.h1).subspan(t * m1, m1);
    std::span<const T> h2 = std::span<const T>(tape.h2).subspan(t * m2, m2);
    std::span<const T> h1_prev = t ? std::span<const T>(tape.h1).subspan((t - 1) * m1, m1) : std::span<const T>(zeros1);
    std::span<const T> h2_prev = t ? std::span<const T>(tape.h2).subspan((t - 1) * m2, m2) : std::span<const T>(zeros2);

    const T dy = grad_outputs[t] * inv_m2;
    for (std::size_t i = 0; i < m2; ++i) {
      dh2[i] = dh2_next[i] + dy;
      delta2[i] = dh2[i] * (T{1} - h2[i] * h2[i]);
    }
    numerics::outer_accumulate<T>(delta2, h1, grads[layout::kRnn2WIn]);
    numerics::outer_accumulate<T>(delta2, h2_prev, grads[layout::kRnn2WRec]);
    for (std::size_t i = 0; i < m2; ++i) {
      grads[layout::kRnn2BIn][i] += delta2[i];
      grads[layout::kRnn2BRec][i] += delta2[i];
    }
    dh1 = dh1_next;
    numerics::matvec_transposed_accumulate<T>(w_in2, delta2, dh1);
    std::fill(dh2_next.begin(), dh2_next.end(), T{0});
    numerics::matvec_transposed_accumulate<T>(w_rec2, delta2, dh2_next);

    for (std::size_t i = 0; i < m1; ++i) delta1[i] = dh1[i] * (T{1} - h1[i] * h1[i]);
    std::copy(delta1.begin(), delta1.end(), grad_projected.begin() + static_cast<std::ptrdiff_t>(t * m1));
    numerics::outer_accumulate<T>(delta1, h1_prev, grads[layout::kRnn1WRec]);
    for (std::size_t i = 0; i < m1; ++i) grads[layout::kRnn1BRec][i] += delta1[i];
    std::fill(dh1_next.begin(), dh1_next.end(), T{0});
    numerics::matvec_transposed_accumulate<T>(w_rec1, delta1, dh1_next);
  }
}

#define STRIDE_INSTANTIATE_BACKPROP(T)                                                                   \
  template FrameTape<T> encode_frame_tape<T>(const Forecaster<T>&, const Tensor<T>&);                   \
  template void encode_frame_backward<T>(const Forecaster<T>&, const FrameTape<T>&, std::span<const T>, \
                                         std::vector<Tensor<T>>&);                                      \
  template void project_latents<T>(const Forecaster<T>&, std::span<const Tensor<T>>, std::span<T>);     \
  template void project_latents_backward<T>(const Forecaster<T>&, std::span<const Tensor<T>>,           \
                                            std::span<const T>, std::vector<Tensor<T>>&,                \
                                            std::vector<std::vector<T>>*);                              \
  template RnnTape<T> rnn_forward<T>(const Forecaster<T>&, std::span<const T>);                         \
  template void rnn_backward<T>(const Forecaster<T>&, const RnnTape<T>&, std::span<const T>,            \
                                std::vector<Tensor<T>>&, std::span<T>, std::size_t);

STRIDE_INSTANTIATE_BACKPROP(float)
STRIDE_INSTANTIATE_BACKPROP(double)

#undef STRIDE_INSTANTIATE_BACKPROP

}  // namespace stride::model

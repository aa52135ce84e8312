#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "stride/forecaster.hpp"

// Forward tapes and adjoints for the fixed forecaster graph. Gradients are
// accumulated into a vector laid out like Forecaster::params().

namespace stride::model {

template <typename T>
struct FrameTape {
  std::array<Tensor<T>, ForecasterConfig::kConvLayers> conv_inputs;
  std::array<Tensor<T>, ForecasterConfig::kConvLayers> pre_activations;
  std::array<std::vector<std::uint32_t>, ForecasterConfig::kBlocks> pool_argmax;
  std::array<numerics::Shape, ForecasterConfig::kBlocks> pool_input_shapes;
  Tensor<T> latent;
};

/// Same result as Forecaster::encode_frame, keeping every intermediate.
template <typename T>
FrameTape<T> encode_frame_tape(const Forecaster<T>& model, const Tensor<T>& frame);

/// Adds ∂loss/∂(CNN parameters) given ∂loss/∂latent.
template <typename T>
void encode_frame_backward(const Forecaster<T>& model, const FrameTape<T>& tape,
                           std::span<const T> grad_latent, std::vector<Tensor<T>>& grads);

/// Hidden states of both RNNs over a sequence. Row t of h1/h2 is the state
/// after step t; the state before step 0 is zero.
template <typename T>
struct RnnTape {
  std::size_t steps = 0;
  std::vector<T> h1;
  std::vector<T> h2;
  std::vector<T> outputs;
};

/// `projected` holds steps × hidden1 values W_in·latent + b_in.
template <typename T>
RnnTape<T> rnn_forward(const Forecaster<T>& model, std::span<const T> projected);

/// BPTT over the tape. grad_outputs[t] is ∂loss/∂y_t. Gradients reach steps
/// t >= stop_step only (stop_step = 0 is the exact gradient). Writes
/// ∂loss/∂projected into grad_projected (steps × hidden1) and accumulates
/// the recurrent parameters' gradients.
template <typename T>
void rnn_backward(const Forecaster<T>& model, const RnnTape<T>& tape,
                  std::span<const T> grad_outputs, std::vector<Tensor<T>>& grads,
                  std::span<T> grad_projected, std::size_t stop_step = 0);

/// Row-wise input projection of several latents: out is count × hidden1.
template <typename T>
void project_latents(const Forecaster<T>& model, std::span<const Tensor<T>> latents,
                     std::span<T> out);

/// Adjoint of project_latents for W_in/b_in; when grad_latents is non-null
/// it receives ∂loss/∂latent for each latent.
template <typename T>
void project_latents_backward(const Forecaster<T>& model, std::span<const Tensor<T>> latents,
                              std::span<const T> grad_projected, std::vector<Tensor<T>>& grads,
                              std::vector<std::vector<T>>* grad_latents);

}  // namespace stride::model

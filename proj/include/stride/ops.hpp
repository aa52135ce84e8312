#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stride/tensor.hpp"

// Dense kernels for the forecaster and their hand-derived adjoints.
//
// All kernels accumulate in a fixed order, so identical inputs produce
// bit-identical outputs regardless of build vectorization width.

namespace stride::numerics {

// --- low-level vector helpers ---------------------------------------------

/// Sum of x[i]*y[i] with eight interleaved partial sums combined pairwise.
template <typename T>
T dot(std::span<const T> x, std::span<const T> y);

/// y += a * x
template <typename T>
void axpy(T a, std::span<const T> x, std::span<T> y);

template <typename T>
T sum(std::span<const T> x);

/// y = W x, W stored row-major as rows x cols.
template <typename T>
void matvec(const Tensor<T>& w, std::span<const T> x, std::span<T> y);

/// y += W^T d
template <typename T>
void matvec_transposed_accumulate(const Tensor<T>& w, std::span<const T> d, std::span<T> y);

/// G += d x^T
template <typename T>
void outer_accumulate(std::span<const T> d, std::span<const T> x, Tensor<T>& g);

// --- convolution -----------------------------------------------------------

/// 3x3 stride-1 convolution with zero "same" padding. input C×H×W,
/// kernels O×C×3×3, bias O. Returns O×H×W.
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

/// Adjoint of conv2d_same. When `need_input` is false the input gradient is
/// left empty.
template <typename T>
Conv2dGrads<T> conv2d_same_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                    const Tensor<T>& grad_output, bool need_input = true);

/// Accumulating variant used by the training loops: adds into existing
/// kernel/bias gradient tensors and (optionally) writes the input gradient.
template <typename T>
void conv2d_same_backward_accumulate(const Tensor<T>& input, const Tensor<T>& kernels,
                                     const Tensor<T>& grad_output, Tensor<T>* grad_input,
                                     Tensor<T>& grad_kernels, Tensor<T>& grad_bias);

// --- pooling ---------------------------------------------------------------

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat input index of the selected element, one per output cell.
  std::vector<std::uint32_t> argmax;
};

/// 2×2 stride-2 max pooling with floor semantics. Ties resolve to the first
/// element in row-major scan order of the window.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                            const Tensor<T>& grad_output);

// --- activations -----------------------------------------------------------

template <typename T>
Tensor<T> relu6(const Tensor<T>& x);

template <typename T>
void relu6_inplace(Tensor<T>& x);

/// Gradient passes where 0 < x < 6 (x is the pre-activation).
template <typename T>
Tensor<T> relu6_backward(const Tensor<T>& pre_activation, const Tensor<T>& grad_output);

// --- recurrent cell --------------------------------------------------------

/// h = tanh(W_in x + b_in + W_rec h_prev + b_rec)
template <typename T>
Tensor<T> rnn_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& w_in,
                   const Tensor<T>& w_rec, const Tensor<T>& b_in, const Tensor<T>& b_rec);

/// Input projection W_in x + b_in, written into `out`.
template <typename T>
void rnn_project_input(const Tensor<T>& w_in, const Tensor<T>& b_in, std::span<const T> x,
                       std::span<T> out);

/// Recurrent half of the cell given an already projected input:
/// h = tanh(projected + (W_rec h_prev + b_rec)).
template <typename T>
void rnn_step_projected(std::span<const T> projected, std::span<const T> h_prev,
                        const Tensor<T>& w_rec, const Tensor<T>& b_rec, std::span<T> h);

template <typename T>
struct RnnStepGrads {
  Tensor<T> x;
  Tensor<T> h_prev;
  Tensor<T> w_in;
  Tensor<T> w_rec;
  Tensor<T> b_in;
  Tensor<T> b_rec;
};

template <typename T>
RnnStepGrads<T> rnn_step_backward(const Tensor<T>& x, const Tensor<T>& h_prev,
                                  const Tensor<T>& w_in, const Tensor<T>& w_rec,
                                  const Tensor<T>& h, const Tensor<T>& grad_h);

// --- loss ------------------------------------------------------------------

/// mean((prediction - target)^2)
template <typename T>
T mse(std::span<const T> prediction, std::span<const T> target);

template <typename T>
std::vector<T> mse_backward(std::span<const T> prediction, std::span<const T> target);

}  // namespace stride::numerics

#include "stride/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stride::numerics {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_shape(const Shape& actual, const Shape& expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) +
                     ", got " + shape_string(actual));
  }
}

template <typename T>
T dot(std::span<const T> x, std::span<const T> y) {
  const std::size_t n = x.size();
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += x[i + j] * y[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += x[i] * y[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

template <typename T>
void axpy(T a, std::span<const T> x, std::span<T> y) {
  const std::size_t n = x.size();
  const T* xs = x.data();
  T* ys = y.data();
  for (std::size_t i = 0; i < n; ++i) ys[i] += a * xs[i];
}

template <typename T>
T sum(std::span<const T> x) {
  T acc[8] = {};
  std::size_t i = 0;
  const std::size_t n = x.size();
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += x[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += x[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

template <typename T>
void matvec(const Tensor<T>& w, std::span<const T> x, std::span<T> y) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  if (x.size() != cols || y.size() != rows) {
    throw ShapeError("matvec: matrix " + shape_string(w.shape()) + " with vector of length " +
                     std::to_string(x.size()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot<T>(std::span<const T>(w.data() + r * cols, cols), x);
  }
}

template <typename T>
void matvec_transposed_accumulate(const Tensor<T>& w, std::span<const T> d, std::span<T> y) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] == T{0}) continue;
    axpy<T>(d[r], std::span<const T>(w.data() + r * cols, cols), y);
  }
}

template <typename T>
void outer_accumulate(std::span<const T> d, std::span<const T> x, Tensor<T>& g) {
  const std::size_t rows = g.dim(0), cols = g.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] == T{0}) continue;
    axpy<T>(d[r], x, std::span<T>(g.data() + r * cols, cols));
  }
}

namespace {

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  if (input.rank() != 3) throw ShapeError("conv2d_same: input must be C×H×W, got " + shape_string(input.shape()));
  if (kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
    throw ShapeError("conv2d_same: kernels must be O×C×3×3, got " + shape_string(kernels.shape()));
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d_same: kernel channels " + std::to_string(kernels.dim(1)) +
                     " do not match input channels " + std::to_string(input.dim(0)));
  }
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) {
    throw ShapeError("conv2d_same: bias must have " + std::to_string(kernels.dim(0)) +
                     " elements, got " + shape_string(bias.shape()));
  }
}

// Copies `count` H×W planes into (H+2)×(W+2) planes with a zero border, plus
// two trailing zeros so shifted reads of the last plane stay in bounds.
template <typename T>
std::vector<T> pad_planes(const T* data, std::size_t count, std::size_t height, std::size_t width) {
  const std::size_t pw = width + 2, pplane = (height + 2) * pw;
  std::vector<T> padded(count * pplane + 2, T{0});
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const T* src = data + (c * height + y) * width;
      std::copy(src, src + width, padded.data() + c * pplane + (y + 1) * pw + 1);
    }
  }
  return padded;
}

}  // namespace

template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  check_conv_shapes(input, kernels, bias);
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t outs = kernels.dim(0);
  // Zero-padded copy of the input; each tap then becomes one contiguous pass
  // over rows of stride `pw`. Two columns per row are scratch and get cropped.
  const std::size_t pw = width + 2, pplane = (height + 2) * pw, span = height * pw;
  const auto padded = pad_planes(input.data(), channels, height, width);
  Tensor<T> out({outs, height, width});
  std::vector<T> acc(span);
  for (std::size_t o = 0; o < outs; ++o) {
    T* __restrict a = acc.data();
    std::fill(a, a + span, bias[o]);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* kp = kernels.data() + (o * channels + c) * 9;
      const T w0 = kp[0], w1 = kp[1], w2 = kp[2], w3 = kp[3], w4 = kp[4], w5 = kp[5], w6 = kp[6], w7 = kp[7],
              w8 = kp[8];
      const T* __restrict r0 = padded.data() + c * pplane;
      const T* __restrict r1 = r0 + pw;
      const T* __restrict r2 = r1 + pw;
      for (std::size_t i = 0; i < span; ++i) {
        T v = a[i];
        v += w0 * r0[i];
        v += w1 * r0[i + 1];
        v += w2 * r0[i + 2];
        v += w3 * r1[i];
        v += w4 * r1[i + 1];
        v += w5 * r1[i + 2];
        v += w6 * r2[i];
        v += w7 * r2[i + 1];
        v += w8 * r2[i + 2];
        a[i] = v;
      }
    }
    T* op = out.data() + o * height * width;
    for (std::size_t y = 0; y < height; ++y) std::copy(a + y * pw, a + y * pw + width, op + y * width);
  }
  return out;
}

template <typename T>
void conv2d_same_backward_accumulate(const Tensor<T>& input, const Tensor<T>& kernels,
                                     const Tensor<T>& grad_output, Tensor<T>* grad_input,
                                     Tensor<T>& grad_kernels, Tensor<T>& grad_bias) {
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t outs = kernels.dim(0);
  require_shape(grad_output.shape(), {outs, height, width}, "conv2d_same_backward grad_output");
  require_shape(grad_kernels.shape(), kernels.shape(), "conv2d_same_backward grad_kernels");
  require_shape(grad_bias.shape(), {outs}, "conv2d_same_backward grad_bias");
  if (grad_input) require_shape(grad_input->shape(), input.shape(), "conv2d_same_backward grad_input");
  const std::size_t plane = height * width;
  const std::size_t pw = width + 2, pplane = (height + 2) * pw, span = height * pw;
  const auto in_p = pad_planes(input.data(), channels, height, width);
  const auto grad_p = pad_planes(grad_output.data(), outs, height, width);

  for (std::size_t o = 0; o < outs; ++o) {
    grad_bias[o] += sum<T>(std::span<const T>(grad_output.data() + o * plane, plane));
    // Scratch columns of the padded layout are zero, so they add nothing.
    const std::span<const T> g(grad_p.data() + o * pplane + pw + 1, span);
    for (std::size_t c = 0; c < channels; ++c) {
      T* gk = grad_kernels.data() + (o * channels + c) * 9;
      const T* ip = in_p.data() + c * pplane;
      for (std::size_t k = 0; k < 9; ++k) {
        gk[k] += dot<T>(g, std::span<const T>(ip + (k / 3) * pw + (k % 3), span));
      }
    }
  }

  if (!grad_input) return;
  std::vector<T> acc(span);
  for (std::size_t c = 0; c < channels; ++c) {
    T* __restrict a = acc.data();
    std::fill(a, a + span, T{0});
    for (std::size_t o = 0; o < outs; ++o) {
      const T* kp = kernels.data() + (o * channels + c) * 9;
      // Correlation with the flipped kernel over the padded gradient.
      const T w0 = kp[8], w1 = kp[7], w2 = kp[6], w3 = kp[5], w4 = kp[4], w5 = kp[3], w6 = kp[2], w7 = kp[1],
              w8 = kp[0];
      const T* __restrict r0 = grad_p.data() + o * pplane;
      const T* __restrict r1 = r0 + pw;
      const T* __restrict r2 = r1 + pw;
      for (std::size_t i = 0; i < span; ++i) {
        T v = a[i];
        v += w0 * r0[i];
        v += w1 * r0[i + 1];
        v += w2 * r0[i + 2];
        v += w3 * r1[i];
        v += w4 * r1[i + 1];
        v += w5 * r1[i + 2];
        v += w6 * r2[i];
        v += w7 * r2[i + 1];
        v += w8 * r2[i + 2];
        a[i] = v;
      }
    }
    T* gi = grad_input->data() + c * plane;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) gi[y * width + x] += a[y * pw + x];
    }
  }
}

template <typename T>
Conv2dGrads<T> conv2d_same_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                    const Tensor<T>& grad_output, bool need_input) {
  Conv2dGrads<T> g;
  g.kernels = Tensor<T>(kernels.shape());
  g.bias = Tensor<T>({kernels.dim(0)});
  if (need_input) g.input = Tensor<T>(input.shape());
  conv2d_same_backward_accumulate(input, kernels, grad_output, need_input ? &g.input : nullptr,
                                  g.kernels, g.bias);
  return g;
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  if (input.rank() != 3) throw ShapeError("maxpool2: input must be C×H×W, got " + shape_string(input.shape()));
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  if (height < 2 || width < 2) {
    throw ShapeError("maxpool2: spatial extents must be >= 2, got " + shape_string(input.shape()));
  }
  const std::size_t oh = height / 2, ow = width / 2;
  PoolResult<T> r{Tensor<T>({channels, oh, ow}), std::vector<std::uint32_t>(channels * oh * ow)};
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t base = c * height * width;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t i00 = base + (2 * y) * width + 2 * x;
        const std::size_t cand[4] = {i00, i00 + 1, i00 + width, i00 + width + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (input[cand[k]] > input[best]) best = cand[k];
        }
        const std::size_t o = (c * oh + y) * ow + x;
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                            const Tensor<T>& grad_output) {
  if (argmax.size() != grad_output.size()) {
    throw ShapeError("maxpool2_backward: argmax length " + std::to_string(argmax.size()) +
                     " does not match gradient " + shape_string(grad_output.shape()));
  }
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) throw ShapeError("maxpool2_backward: argmax index out of range");
    g[argmax[i]] += grad_output[i];
  }
  return g;
}

template <typename T>
void relu6_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = std::min(std::max(v, T{0}), T{6});
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& x) {
  Tensor<T> y = x;
  relu6_inplace(y);
  return y;
}

template <typename T>
Tensor<T> relu6_backward(const Tensor<T>& pre_activation, const Tensor<T>& grad_output) {
  require_shape(grad_output.shape(), pre_activation.shape(), "relu6_backward");
  Tensor<T> g(pre_activation.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T v = pre_activation[i];
    g[i] = (v > T{0} && v < T{6}) ? grad_output[i] : T{0};
  }
  return g;
}

namespace {

template <typename T>
void check_rnn_shapes(std::size_t n, std::size_t m, const Tensor<T>& w_in, const Tensor<T>& w_rec,
                      const Tensor<T>& b_in, const Tensor<T>& b_rec) {
  require_shape(w_in.shape(), {m, n}, "rnn_step W_in");
  require_shape(w_rec.shape(), {m, m}, "rnn_step W_rec");
  require_shape(b_in.shape(), {m}, "rnn_step b_in");
  require_shape(b_rec.shape(), {m}, "rnn_step b_rec");
}

}  // namespace

template <typename T>
void rnn_project_input(const Tensor<T>& w_in, const Tensor<T>& b_in, std::span<const T> x,
                       std::span<T> out) {
  matvec(w_in, x, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b_in[i];
}

template <typename T>
void rnn_step_projected(std::span<const T> projected, std::span<const T> h_prev,
                        const Tensor<T>& w_rec, const Tensor<T>& b_rec, std::span<T> h) {
  const std::size_t m = w_rec.dim(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T rec = dot<T>(std::span<const T>(w_rec.data() + i * m, m), h_prev) + b_rec[i];
    h[i] = std::tanh(projected[i] + rec);
  }
}

template <typename T>
Tensor<T> rnn_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& w_in,
                   const Tensor<T>& w_rec, const Tensor<T>& b_in, const Tensor<T>& b_rec) {
  if (x.rank() != 1 || h_prev.rank() != 1) throw ShapeError("rnn_step: x and h_prev must be vectors");
  const std::size_t n = x.size(), m = h_prev.size();
  check_rnn_shapes(n, m, w_in, w_rec, b_in, b_rec);
  std::vector<T> projected(m);
  rnn_project_input<T>(w_in, b_in, x.values(), projected);
  Tensor<T> h({m});
  rnn_step_projected<T>(projected, h_prev.values(), w_rec, b_rec, h.values());
  return h;
}

template <typename T>
RnnStepGrads<T> rnn_step_backward(const Tensor<T>& x, const Tensor<T>& h_prev,
                                  const Tensor<T>& w_in, const Tensor<T>& w_rec,
                                  const Tensor<T>& h, const Tensor<T>& grad_h) {
  const std::size_t n = x.size(), m = h_prev.size();
  require_shape(w_in.shape(), {m, n}, "rnn_step_backward W_in");
  require_shape(w_rec.shape(), {m, m}, "rnn_step_backward W_rec");
  require_shape(h.shape(), {m}, "rnn_step_backward h");
  require_shape(grad_h.shape(), {m}, "rnn_step_backward grad_h");
  std::vector<T> delta(m);
  for (std::size_t i = 0; i < m; ++i) delta[i] = grad_h[i] * (T{1} - h[i] * h[i]);
  RnnStepGrads<T> g{Tensor<T>({n}), Tensor<T>({m}), Tensor<T>({m, n}),
                    Tensor<T>({m, m}), Tensor<T>({m}), Tensor<T>({m})};
  matvec_transposed_accumulate<T>(w_in, delta, g.x.values());
  matvec_transposed_accumulate<T>(w_rec, delta, g.h_prev.values());
  outer_accumulate<T>(delta, x.values(), g.w_in);
  outer_accumulate<T>(delta, h_prev.values(), g.w_rec);
  for (std::size_t i = 0; i < m; ++i) g.b_in[i] = g.b_rec[i] = delta[i];
  return g;
}

template <typename T>
T mse(std::span<const T> prediction, std::span<const T> target) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ShapeError("mse: prediction/target length mismatch");
  }
  T acc{0};
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const T d = prediction[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<T>(prediction.size());
}

template <typename T>
std::vector<T> mse_backward(std::span<const T> prediction, std::span<const T> target) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ShapeError("mse_backward: prediction/target length mismatch");
  }
  std::vector<T> g(prediction.size());
  const T scale = T{2} / static_cast<T>(prediction.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (prediction[i] - target[i]);
  return g;
}

#define STRIDE_INSTANTIATE_OPS(T)                                                              \
  template T dot<T>(std::span<const T>, std::span<const T>);                                   \
  template void axpy<T>(T, std::span<const T>, std::span<T>);                                  \
  template T sum<T>(std::span<const T>);                                                       \
  template void matvec<T>(const Tensor<T>&, std::span<const T>, std::span<T>);                 \
  template void matvec_transposed_accumulate<T>(const Tensor<T>&, std::span<const T>,          \
                                                std::span<T>);                                 \
  template void outer_accumulate<T>(std::span<const T>, std::span<const T>, Tensor<T>&);       \
  template Tensor<T> conv2d_same<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Conv2dGrads<T> conv2d_same_backward<T>(const Tensor<T>&, const Tensor<T>&,          \
                                                  const Tensor<T>&, bool);                     \
  template void conv2d_same_backward_accumulate<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                   const Tensor<T>&, Tensor<T>*, Tensor<T>&,   \
                                                   Tensor<T>&);                                \
  template PoolResult<T> maxpool2<T>(const Tensor<T>&);                                        \
  template Tensor<T> maxpool2_backward<T>(const Shape&, std::span<const std::uint32_t>,        \
                                          const Tensor<T>&);                                   \
  template Tensor<T> relu6<T>(const Tensor<T>&);                                               \
  template void relu6_inplace<T>(Tensor<T>&);                                                  \
  template Tensor<T> relu6_backward<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template void rnn_project_input<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,   \
                                     std::span<T>);                                            \
  template void rnn_step_projected<T>(std::span<const T>, std::span<const T>, const Tensor<T>&, \
                                      const Tensor<T>&, std::span<T>);                         \
  template Tensor<T> rnn_step<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                 const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template RnnStepGrads<T> rnn_step_backward<T>(const Tensor<T>&, const Tensor<T>&,            \
                                                const Tensor<T>&, const Tensor<T>&,            \
                                                const Tensor<T>&, const Tensor<T>&);           \
  template T mse<T>(std::span<const T>, std::span<const T>);                                   \
  template std::vector<T> mse_backward<T>(std::span<const T>, std::span<const T>);

STRIDE_INSTANTIATE_OPS(float)
STRIDE_INSTANTIATE_OPS(double)

#undef STRIDE_INSTANTIATE_OPS

}  // namespace stride::numerics

#include <cmath>
#include <string>

#include "stride/adam.hpp"
#include "stride/rng.hpp"

namespace stride::numerics {

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

std::vector<double> rng_uniform(RngState& state, std::size_t n) {
  Rng rng(state);
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform();
  state = rng.state();
  return out;
}

NonFiniteGradient::NonFiniteGradient(std::size_t tensor, std::size_t element)
    : std::runtime_error("adam_step: non-finite gradient at tensor " + std::to_string(tensor) +
                         ", element " + std::to_string(element)),
      tensor_index(tensor),
      element_index(element) {}

template <typename T>
AdamState<T> AdamState<T>::like(std::span<const Tensor<T>> params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.shape());
    s.second_moment.emplace_back(p.shape());
  }
  return s;
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    require_shape(grads[t].shape(), params[t].shape(), "adam_step gradient");
    require_shape(state.first_moment[t].shape(), params[t].shape(), "adam_step first moment");
    require_shape(state.second_moment[t].shape(), params[t].shape(), "adam_step second moment");
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      if (!std::isfinite(grads[t][i])) throw NonFiniteGradient(t, i);
    }
  }

  const std::int64_t step = state.step + 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    T* p = params[t].data();
    const T* g = grads[t].data();
    T* m = state.first_moment[t].data();
    T* v = state.second_moment[t].data();
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
  state.step = step;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Tensor<float>>, std::span<const Tensor<float>>,
                               AdamState<float>&, double);
template void adam_step<double>(std::span<Tensor<double>>, std::span<const Tensor<double>>,
                                AdamState<double>&, double);

}  // namespace stride::numerics

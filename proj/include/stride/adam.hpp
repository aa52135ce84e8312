#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "stride/tensor.hpp"

namespace stride::numerics {

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::size_t tensor, std::size_t element);
  std::size_t tensor_index;
  std::size_t element_index;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState like(std::span<const Tensor<T>> params);
};

/// One bias-corrected Adam update. Rejects the whole update (parameters and
/// state untouched) if any gradient element is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               double lr);

}  // namespace stride::numerics

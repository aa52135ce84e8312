#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stride/ops.hpp"
#include "stride/tensor.hpp"

namespace stride::model {

using numerics::Tensor;

enum class Task : std::uint8_t { Cop = 0, Toi = 1 };

const char* to_string(Task task);
Task parse_task(const std::string& name);

/// Architecture of the CNN-RNN forecaster. Three conv blocks of three 3×3
/// convolutions each (ReLU6 after every conv, 2×2 max pool closing each
/// block); the channel count changes at the first conv of a block.
struct ForecasterConfig {
  Task task = Task::Cop;
  int channels = 2;
  int height = 25;
  int width = 50;
  std::array<int, 3> block_channels{12, 32, 32};
  int hidden1 = 52;
  int hidden2 = 19;
  int window = 15;

  static constexpr int kBlocks = 3;
  static constexpr int kConvsPerBlock = 3;
  static constexpr int kConvLayers = kBlocks * kConvsPerBlock;

  void validate() const;

  int conv_in_channels(int layer) const;
  int conv_out_channels(int layer) const;
  /// Spatial extent entering block b (b = 3 gives the pooled output).
  int block_height(int block) const;
  int block_width(int block) const;
  /// Length of the flattened CNN output fed to the first RNN.
  int latent_size() const;

  bool operator==(const ForecasterConfig&) const = default;
};

struct ParamCount {
  std::int64_t cnn = 0;
  std::int64_t rnn = 0;
  std::int64_t total() const { return cnn + rnn; }
};

/// Analytic count: Σ_conv (9·C_in·C_out + C_out) + Σ_rnn (n·m + m² + 2m).
ParamCount param_count(const ForecasterConfig& config);

/// Parameter tensors live in one vector in this fixed order (also the order
/// of the weight file): conv l kernels at 2l, conv l bias at 2l+1 for
/// l = 0..8, then each RNN as W_in, W_rec, b_in, b_rec.
namespace layout {
constexpr std::size_t conv_kernels(int layer) { return 2 * static_cast<std::size_t>(layer); }
constexpr std::size_t conv_bias(int layer) { return 2 * static_cast<std::size_t>(layer) + 1; }
constexpr std::size_t kRnn1WIn = 18;
constexpr std::size_t kRnn1WRec = 19;
constexpr std::size_t kRnn1BIn = 20;
constexpr std::size_t kRnn1BRec = 21;
constexpr std::size_t kRnn2WIn = 22;
constexpr std::size_t kRnn2WRec = 23;
constexpr std::size_t kRnn2BIn = 24;
constexpr std::size_t kRnn2BRec = 25;
constexpr std::size_t kTensorCount = 26;
constexpr bool is_cnn(std::size_t index) { return index < kRnn1WIn; }
}  // namespace layout

std::vector<numerics::Shape> parameter_shapes(const ForecasterConfig& config);

template <typename T>
class Forecaster {
 public:
  /// All-zero parameters.
  explicit Forecaster(ForecasterConfig config);

  const ForecasterConfig& config() const { return config_; }
  Task task() const { return config_.task; }

  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  const Tensor<T>& param(std::size_t index) const { return params_[index]; }

  /// Element count obtained by walking the instantiated tensors.
  std::int64_t instantiated_parameter_count() const;

  /// frame: C×H×W, already min-max normalized. Returns the flattened latent.
  Tensor<T> encode_frame(const Tensor<T>& frame) const;

  /// Runs both RNNs across `latents` (oldest first) from zero hidden state and
  /// returns the per-step scalar readout mean(h2_t). Requires exactly
  /// config().window latents.
  std::vector<T> forecast_window(std::span<const Tensor<T>> latents) const;

  template <typename U>
  Forecaster<U> cast() const {
    Forecaster<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = params_[i].template cast<U>();
    return out;
  }

  bool operator==(const Forecaster&) const = default;

 private:
  ForecasterConfig config_;
  std::vector<Tensor<T>> params_;
};

/// He-uniform conv kernels (±√(6/fan_in)), uniform ±1/√fan_in recurrent
/// weights, zero biases. Deterministic in `seed`.
template <typename T>
Forecaster<T> initialize(const ForecasterConfig& config, std::uint64_t seed);

/// Zero tensors shaped like the model's parameters.
template <typename T>
std::vector<Tensor<T>> zero_gradients(const Forecaster<T>& model);

}  // namespace stride::model

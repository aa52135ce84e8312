#pragma once

#include <optional>
#include <vector>

#include "stride/forecaster.hpp"

namespace stride::model {

enum class StreamMode {
  /// Re-roll both RNNs from zero state over the last `window` latents.
  Windowed,
  /// Carry the RNN hidden states forward one step per frame.
  Continuous,
};

const char* to_string(StreamMode mode);
StreamMode parse_stream_mode(const std::string& name);

/// Per-stream state: a ring of the most recent latents, plus the persistent
/// hidden pair used in continuous mode. Single owner; not shared.
template <typename T>
class StreamState {
 public:
  StreamState(const ForecasterConfig& config, StreamMode mode);

  StreamMode mode() const { return mode_; }
  int fill() const { return fill_; }
  int capacity() const { return static_cast<int>(ring_.size()); }
  void reset();

  void push(Tensor<T> latent);
  /// Buffered latents, oldest first.
  std::vector<Tensor<T>> ordered() const;

  std::vector<T>& hidden1() { return hidden1_; }
  std::vector<T>& hidden2() { return hidden2_; }

 private:
  StreamMode mode_;
  std::vector<Tensor<T>> ring_;
  int head_ = 0;  // slot the next latent goes into
  int fill_ = 0;
  std::vector<T> hidden1_;
  std::vector<T> hidden2_;
};

/// Encodes `frame` once and pushes its latent. Windowed mode emits a forecast
/// only once the ring is full; continuous mode emits on every frame.
template <typename T>
std::optional<T> stream_predict(const Forecaster<T>& model, const Tensor<T>& frame, StreamState<T>& state);

}  // namespace stride::model

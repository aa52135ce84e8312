#include "stride/stream.hpp"

#include <stdexcept>

#include "stride/backprop.hpp"

namespace stride::model {

const char* to_string(StreamMode mode) { return mode == StreamMode::Windowed ? "windowed" : "continuous"; }

StreamMode parse_stream_mode(const std::string& name) {
  if (name == "windowed") return StreamMode::Windowed;
  if (name == "continuous") return StreamMode::Continuous;
  throw std::invalid_argument("unknown stream mode '" + name + "' (expected windowed or continuous)");
}

template <typename T>
StreamState<T>::StreamState(const ForecasterConfig& config, StreamMode mode)
    : mode_(mode),
      ring_(static_cast<std::size_t>(config.window)),
      hidden1_(static_cast<std::size_t>(config.hidden1), T{0}),
      hidden2_(static_cast<std::size_t>(config.hidden2), T{0}) {}

template <typename T>
void StreamState<T>::reset() {
  head_ = fill_ = 0;
  std::fill(hidden1_.begin(), hidden1_.end(), T{0});
  std::fill(hidden2_.begin(), hidden2_.end(), T{0});
}

template <typename T>
void StreamState<T>::push(Tensor<T> latent) {
  ring_[static_cast<std::size_t>(head_)] = std::move(latent);
  head_ = (head_ + 1) % capacity();
  if (fill_ < capacity()) ++fill_;
}

template <typename T>
std::vector<Tensor<T>> StreamState<T>::ordered() const {
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(fill_));
  const int start = (head_ - fill_ + capacity()) % capacity();
  for (int i = 0; i < fill_; ++i) out.push_back(ring_[static_cast<std::size_t>((start + i) % capacity())]);
  return out;
}

template <typename T>
std::optional<T> stream_predict(const Forecaster<T>& model, const Tensor<T>& frame, StreamState<T>& state) {
  Tensor<T> latent = model.encode_frame(frame);
  if (state.mode() == StreamMode::Windowed) {
    state.push(std::move(latent));
    if (state.fill() < state.capacity()) return std::nullopt;
    const auto window = state.ordered();
    return model.forecast_window(window).back();
  }

  const auto m1 = static_cast<std::size_t>(model.config().hidden1);
  const auto m2 = static_cast<std::size_t>(model.config().hidden2);
  std::vector<T> u1(m1), u2(m2), h1(m1), h2(m2);
  numerics::rnn_project_input<T>(model.param(layout::kRnn1WIn), model.param(layout::kRnn1BIn), latent.values(), u1);
  numerics::rnn_step_projected<T>(u1, state.hidden1(), model.param(layout::kRnn1WRec), model.param(layout::kRnn1BRec), h1);
  numerics::rnn_project_input<T>(model.param(layout::kRnn2WIn), model.param(layout::kRnn2BIn), h1, u2);
  numerics::rnn_step_projected<T>(u2, state.hidden2(), model.param(layout::kRnn2WRec), model.param(layout::kRnn2BRec), h2);
  state.hidden1() = std::move(h1);
  state.hidden2() = std::move(h2);
  state.push(std::move(latent));
  return numerics::sum<T>(state.hidden2()) * (T{1} / static_cast<T>(m2));
}

template class StreamState<float>;
template class StreamState<double>;
template std::optional<float> stream_predict<float>(const Forecaster<float>&, const Tensor<float>&, StreamState<float>&);
template std::optional<double> stream_predict<double>(const Forecaster<double>&, const Tensor<double>&,
                                                      StreamState<double>&);

}  // namespace stride::model

#include "stride/forecaster.hpp"

#include <cmath>
#include <stdexcept>

#include "stride/backprop.hpp"
#include "stride/rng.hpp"

namespace stride::model {

using numerics::Shape;
using numerics::ShapeError;

const char* to_string(Task task) { return task == Task::Cop ? "cop" : "toi"; }

Task parse_task(const std::string& name) {
  if (name == "cop" || name == "COP") return Task::Cop;
  if (name == "toi" || name == "TOI") return Task::Toi;
  throw std::invalid_argument("unknown task '" + name + "' (expected cop or toi)");
}

void ForecasterConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ForecasterConfig: " + m); };
  if (channels < 1 || height < 1 || width < 1) fail("input dimensions must be positive");
  for (int c : block_channels) {
    if (c < 1) fail("block channel widths must be positive");
  }
  for (int b = 0; b < kBlocks; ++b) {
    if (block_height(b) < 2 || block_width(b) < 2) {
      fail("input " + std::to_string(height) + "x" + std::to_string(width) +
           " is too small for three 2x2 pooling stages");
    }
  }
  if (hidden1 < 1 || hidden2 < 1) fail("hidden sizes must be positive");
  if (window < 1) fail("window length must be positive");
}

int ForecasterConfig::conv_in_channels(int layer) const {
  if (layer == 0) return channels;
  const int block = layer / kConvsPerBlock;
  if (layer % kConvsPerBlock == 0) return block_channels[block - 1];
  return block_channels[block];
}

int ForecasterConfig::conv_out_channels(int layer) const { return block_channels[layer / kConvsPerBlock]; }

int ForecasterConfig::block_height(int block) const {
  int h = height;
  for (int b = 0; b < block; ++b) h /= 2;
  return h;
}

int ForecasterConfig::block_width(int block) const {
  int w = width;
  for (int b = 0; b < block; ++b) w /= 2;
  return w;
}

int ForecasterConfig::latent_size() const {
  return block_channels[kBlocks - 1] * block_height(kBlocks) * block_width(kBlocks);
}

ParamCount param_count(const ForecasterConfig& config) {
  config.validate();
  ParamCount pc;
  for (int l = 0; l < ForecasterConfig::kConvLayers; ++l) {
    const std::int64_t cin = config.conv_in_channels(l), cout = config.conv_out_channels(l);
    pc.cnn += 9 * cin * cout + cout;
  }
  auto rnn = [](std::int64_t n, std::int64_t m) { return n * m + m * m + 2 * m; };
  pc.rnn = rnn(config.latent_size(), config.hidden1) + rnn(config.hidden1, config.hidden2);
  return pc;
}

std::vector<Shape> parameter_shapes(const ForecasterConfig& config) {
  config.validate();
  std::vector<Shape> shapes;
  shapes.reserve(layout::kTensorCount);
  for (int l = 0; l < ForecasterConfig::kConvLayers; ++l) {
    const auto cin = static_cast<std::size_t>(config.conv_in_channels(l));
    const auto cout = static_cast<std::size_t>(config.conv_out_channels(l));
    shapes.push_back({cout, cin, 3, 3});
    shapes.push_back({cout});
  }
  const auto n = static_cast<std::size_t>(config.latent_size());
  const auto m1 = static_cast<std::size_t>(config.hidden1);
  const auto m2 = static_cast<std::size_t>(config.hidden2);
  for (auto [in, out] : {std::pair{n, m1}, std::pair{m1, m2}}) {
    shapes.push_back({out, in});
    shapes.push_back({out, out});
    shapes.push_back({out});
    shapes.push_back({out});
  }
  return shapes;
}

template <typename T>
Forecaster<T>::Forecaster(ForecasterConfig config) : config_(config) {
  for (auto& shape : parameter_shapes(config_)) params_.emplace_back(std::move(shape));
}

template <typename T>
std::int64_t Forecaster<T>::instantiated_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.size());
  return n;
}

template <typename T>
Tensor<T> Forecaster<T>::encode_frame(const Tensor<T>& frame) const {
  numerics::require_shape(frame.shape(),
                          {static_cast<std::size_t>(config_.channels), static_cast<std::size_t>(config_.height),
                           static_cast<std::size_t>(config_.width)},
                          "encode_frame input");
  Tensor<T> x = frame;
  for (int b = 0; b < ForecasterConfig::kBlocks; ++b) {
    for (int c = 0; c < ForecasterConfig::kConvsPerBlock; ++c) {
      const int l = b * ForecasterConfig::kConvsPerBlock + c;
      x = numerics::conv2d_same(x, params_[layout::conv_kernels(l)], params_[layout::conv_bias(l)]);
      numerics::relu6_inplace(x);
    }
    x = numerics::maxpool2(x).output;
  }
  return x.reshaped({x.size()});
}

template <typename T>
std::vector<T> Forecaster<T>::forecast_window(std::span<const Tensor<T>> latents) const {
  if (static_cast<int>(latents.size()) != config_.window) {
    throw ShapeError("forecast_window: expected " + std::to_string(config_.window) + " latents, got " +
                     std::to_string(latents.size()));
  }
  std::vector<T> projected(latents.size() * static_cast<std::size_t>(config_.hidden1));
  project_latents(*this, latents, std::span<T>(projected));
  return rnn_forward(*this, std::span<const T>(projected)).outputs;
}

template <typename T>
Forecaster<T> initialize(const ForecasterConfig& config, std::uint64_t seed) {
  Forecaster<T> model(config);
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.rank() == 1) continue;  // biases start at zero
    double bound;
    if (p.rank() == 4) {
      const double fan_in = static_cast<double>(p.dim(1) * 9);
      bound = std::sqrt(6.0 / fan_in);
    } else {
      bound = 1.0 / std::sqrt(static_cast<double>(p.dim(1)));
    }
    numerics::Rng rng(numerics::derive_seed(seed, 0x1417, i));
    for (auto& v : p.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return model;
}

template <typename T>
std::vector<Tensor<T>> zero_gradients(const Forecaster<T>& model) {
  std::vector<Tensor<T>> g;
  g.reserve(model.params().size());
  for (const auto& p : model.params()) g.emplace_back(p.shape());
  return g;
}

template class Forecaster<float>;
template class Forecaster<double>;
template Forecaster<float> initialize<float>(const ForecasterConfig&, std::uint64_t);
template Forecaster<double> initialize<double>(const ForecasterConfig&, std::uint64_t);
template std::vector<Tensor<float>> zero_gradients<float>(const Forecaster<float>&);
template std::vector<Tensor<double>> zero_gradients<double>(const Forecaster<double>&);

}  // namespace stride::model

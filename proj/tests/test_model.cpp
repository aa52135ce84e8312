#include <doctest.h>

#include <cmath>

#include "stride/stream.hpp"
#include "stride/weights_io.hpp"
#include "support.hpp"

using namespace stride;
using model::ForecasterConfig;

TEST_CASE("default parameter counts") {
  const ForecasterConfig cfg;
  const auto pc = model::param_count(cfg);
  CHECK(pc.cnn == 52572);
  CHECK(pc.rnn == 34147);
  const model::Forecaster<float> m(cfg);
  CHECK(m.instantiated_parameter_count() == pc.total());
  CHECK(m.params().size() == model::layout::kTensorCount);
}

TEST_CASE("unit-width parameter count follows the per-layer formula") {
  ForecasterConfig cfg;
  cfg.channels = 1;
  cfg.block_channels = {1, 1, 1};
  cfg.hidden1 = 1;
  cfg.hidden2 = 1;
  // 9 convs of 9·1·1 + 1; latent 1·3·6 = 18 feeds RNN1 (18 + 1 + 2), RNN2 (1 + 1 + 2).
  const auto pc = model::param_count(cfg);
  CHECK(pc.cnn == 90);
  CHECK(pc.rnn == 25);
  CHECK(pc.total() == 115);
  CHECK(model::Forecaster<double>(cfg).instantiated_parameter_count() == 115);
}

TEST_CASE("a 2x25x50 frame encodes to 576 latents") {
  const auto m = model::initialize<float>({}, 1);
  CHECK(m.config().latent_size() == 576);
  const auto trial = testing::noisy_trial(3);
  const auto latent = m.encode_frame(datagen::normalize_frame<float>(trial.frame(0)));
  CHECK(latent.shape() == numerics::Shape{576});
  CHECK_THROWS_AS(m.encode_frame(numerics::Tensor<float>({2, 24, 50})), numerics::ShapeError);
}

TEST_CASE("config validation") {
  ForecasterConfig cfg;
  cfg.height = 7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.hidden1 = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.block_channels = {12, 0, 32};
  CHECK_THROWS_AS(model::param_count(cfg), std::invalid_argument);
}

TEST_CASE("initialization is seeded and bounded") {
  const auto a = model::initialize<float>({}, 5);
  const auto b = model::initialize<float>({}, 5);
  const auto c = model::initialize<float>({}, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  const double bound = std::sqrt(6.0 / (9.0 * 2.0));
  for (float v : a.param(model::layout::conv_kernels(0)).values()) CHECK(std::abs(v) <= bound + 1e-6);
  for (float v : a.param(model::layout::conv_bias(0)).values()) CHECK(v == 0.0f);
  const double rbound = 1.0 / std::sqrt(576.0);
  for (float v : a.param(model::layout::kRnn1WIn).values()) CHECK(std::abs(v) <= rbound + 1e-6);
}

TEST_CASE("every layer's gradient on a micro network matches central differences") {
  for (std::uint64_t seed : {21u, 22u}) {
    for (const auto& r : testing::network_gradient_checks(seed, 16)) {
      INFO(r.grad.name << " seed " << seed);
      CHECK(r.grad.elements >= 1);
      CHECK(r.grad.rel_error < 1e-6);
    }
  }
}

TEST_CASE("training-loss gradients on trial frames match where the loss is smooth") {
  std::size_t checked = 0;
  for (const auto& r : testing::model_gradient_checks(31, 3, 1)) {
    INFO(r.grad.name);
    CHECK(r.grad.rel_error < 1e-6);
    checked += r.grad.elements;
  }
  CHECK(checked > 60);
}

TEST_CASE("streaming windowed forecasts equal offline windows bit for bit (double)") {
  const auto m = testing::random_micro_model(4);
  const auto trial = testing::noisy_trial(8);
  model::StreamState<double> state(m.config(), model::StreamMode::Windowed);
  std::vector<numerics::Tensor<double>> latents;
  int emitted = 0;
  for (int t = 0; t < trial.n_frames; ++t) {
    const auto frame = datagen::normalize_frame<double>(trial.frame(static_cast<std::size_t>(t)));
    latents.push_back(m.encode_frame(frame));
    const auto y = model::stream_predict(m, frame, state);
    if (t < 14) {
      CHECK_FALSE(y.has_value());
      continue;
    }
    REQUIRE(y.has_value());
    ++emitted;
    const auto offline = m.forecast_window(std::span<const numerics::Tensor<double>>(latents).subspan(
        static_cast<std::size_t>(t - 14), 15));
    CHECK(*y == offline.back());
  }
  CHECK(emitted == trial.n_frames - 14);
}

TEST_CASE("continuous mode emits every frame and carries state") {
  const auto m = testing::random_micro_model(4);
  const auto trial = testing::noisy_trial(9);
  model::StreamState<double> state(m.config(), model::StreamMode::Continuous);
  std::vector<double> outs;
  for (int t = 0; t < 20; ++t) {
    const auto y = model::stream_predict(m, datagen::normalize_frame<double>(trial.frame(static_cast<std::size_t>(t))),
                                         state);
    REQUIRE(y.has_value());
    outs.push_back(*y);
  }
  // The first 15 continuous outputs equal one 15-step window from zero state.
  std::vector<numerics::Tensor<double>> latents;
  for (int t = 0; t < 15; ++t) {
    latents.push_back(m.encode_frame(datagen::normalize_frame<double>(trial.frame(static_cast<std::size_t>(t)))));
  }
  const auto window = m.forecast_window(latents);
  for (int t = 0; t < 15; ++t) CHECK(outs[static_cast<std::size_t>(t)] == window[static_cast<std::size_t>(t)]);
  state.reset();
  CHECK(state.fill() == 0);
}

TEST_CASE("offline forecasts ignore frames after the forecast frame") {
  auto m = testing::random_micro_model(12).cast<float>();
  numerics::Rng rng(77);
  for (int c = 0; c < 8; ++c) {
    auto trial = testing::noisy_trial(100 + static_cast<std::uint64_t>(c));
    const auto before = training::window_predictions(m, training::encode_trial(m, trial));
    const int k = 1 + static_cast<int>(rng.below(15));
    const int forecast_frame = trial.impact_idx - k;
    const auto first = static_cast<std::size_t>(forecast_frame + 1) * datagen::kFramePixels;
    for (std::size_t i = first; i < trial.frames.size(); ++i) trial.frames[i] = static_cast<std::uint8_t>(rng.below(256));
    const auto after = training::window_predictions(m, training::encode_trial(m, trial));
    for (int j = k; j <= 15; ++j) CHECK(after[static_cast<std::size_t>(j - 1)] == before[static_cast<std::size_t>(j - 1)]);
  }
}

TEST_CASE("weight files round trip and reject corruption") {
  testing::TempDir dir;
  const auto m = model::initialize<float>({model::Task::Toi}, 3);
  const auto path = dir.path() / "w.sfw";
  model::save_weights(m, path);
  const auto back = model::load_weights(path);
  CHECK(back == m);
  CHECK(back.task() == model::Task::Toi);

  auto bytes = model::encode_weights(m);
  auto expect_kind = [](std::span<const std::uint8_t> b, FormatErrorKind kind) {
    try {
      model::decode_weights(b);
      FAIL("accepted a broken weight file");
    } catch (const FormatError& e) {
      CHECK(e.kind() == kind);
    }
  };
  auto flipped = bytes;
  flipped[100] ^= 0x40;
  expect_kind(flipped, FormatErrorKind::ChecksumMismatch);
  expect_kind(std::span<const std::uint8_t>(bytes).first(bytes.size() - 9), FormatErrorKind::Truncated);
  auto magic = bytes;
  magic[0] = 'X';
  expect_kind(magic, FormatErrorKind::BadMagic);
  CHECK_THROWS_AS(model::load_weights(dir.path() / "missing.sfw"), FormatError);
}

TEST_CASE("only the fixed channel plan can be saved") {
  ForecasterConfig cfg;
  cfg.block_channels = {4, 8, 8};
  CHECK_THROWS(model::encode_weights(model::Forecaster<float>(cfg)));
}

TEST_CASE("float and double forward passes agree closely") {
  const auto md = testing::random_micro_model(6);
  const auto mf = md.cast<float>();
  const auto trial = testing::noisy_trial(6);
  const auto pd = training::window_predictions(md, training::encode_trial(md, trial));
  const auto pf = training::window_predictions(mf, training::encode_trial(mf, trial));
  for (int k = 0; k < 15; ++k) CHECK(pf[static_cast<std::size_t>(k)] == doctest::Approx(pd[static_cast<std::size_t>(k)]).epsilon(1e-4));
}

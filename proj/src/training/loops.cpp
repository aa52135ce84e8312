#include <numeric>
#include <stdexcept>

#include "stride/adam.hpp"
#include "stride/parallel.hpp"
#include "stride/rng.hpp"
#include "stride/training.hpp"

namespace stride::training {

namespace layout = model::layout;
using numerics::AdamState;
using numerics::Rng;
using numerics::derive_seed;

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void check_finetune_inputs(const Forecaster<float>& base, std::size_t n, const TrainConfig& config) {
  if (n == 0) throw std::invalid_argument("finetune: no training trials");
  if (base.task() != config.task) {
    throw std::invalid_argument(std::string("finetune: base model task is ") + model::to_string(base.task()) +
                                " but " + model::to_string(config.task) + " was requested");
  }
  if (config.finetune_epochs < 0) throw std::invalid_argument("finetune: negative epoch count");
}

}  // namespace

PretrainResult pretrain(const datagen::Dataset& base, const TrainConfig& config,
                        const model::ForecasterConfig& arch) {
  if (base.trials.empty()) throw std::invalid_argument("pretrain: base dataset has no trials");
  if (config.pretrain_epochs < 0) throw std::invalid_argument("pretrain: negative epoch count");
  model::ForecasterConfig cfg = arch;
  cfg.task = config.task;
  cfg.window = config.window;
  PretrainResult result{model::initialize<float>(cfg, derive_seed(config.seed, 0x9E7)), {}};
  auto& net = result.model;
  auto adam = AdamState<float>::like(net.params());
  const auto n = base.trials.size();

  double initial = 0.0;
  for (const auto& trial : base.trials) initial += static_context_eval(net, trial);
  result.epoch_losses.push_back(initial / static_cast<double>(n));
  if (config.on_epoch) config.on_epoch(0, result.epoch_losses.back());

  for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t i : shuffled_order(n, derive_seed(config.seed, 0x5EED, static_cast<std::uint64_t>(epoch)))) {
      auto r = static_context_loss(net, base.trials[i], config.pretrain_bptt_frames);
      numerics::adam_step<float>(net.params(), r.grads, adam, config.pretrain_lr);
      total += r.loss;
    }
    result.epoch_losses.push_back(total / static_cast<double>(n));
    if (config.on_epoch) config.on_epoch(epoch, result.epoch_losses.back());
  }
  return result;
}

FinetuneResult finetune_latents(const Forecaster<float>& base, std::span<const LatentTrial<float>* const> trials,
                                const TrainConfig& config) {
  check_finetune_inputs(base, trials.size(), config);
  FinetuneResult result{base, {}};
  auto& net = result.model;
  // Encoder tensors get no gradient here, so only the recurrent ones step.
  auto rnn_params = std::span<Tensor<float>>(net.params()).subspan(layout::kRnn1WIn);
  auto adam = AdamState<float>::like(rnn_params);
  for (int epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t i : shuffled_order(trials.size(), derive_seed(config.seed, 0xF17E, static_cast<std::uint64_t>(epoch)))) {
      auto r = window_loss_latents(net, *trials[i]);
      numerics::adam_step<float>(rnn_params, std::span<const Tensor<float>>(r.grads).subspan(layout::kRnn1WIn), adam,
                                 config.finetune_lr());
      total += r.loss;
    }
    result.epoch_losses.push_back(total / static_cast<double>(trials.size()));
    if (config.on_epoch) config.on_epoch(epoch, result.epoch_losses.back());
  }
  return result;
}

FinetuneResult finetune(const Forecaster<float>& base, std::span<const Trial* const> trials,
                        const TrainConfig& config) {
  check_finetune_inputs(base, trials.size(), config);
  if (!config.finetune_cnn) {
    std::vector<LatentTrial<float>> encoded(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) encoded[i] = encode_trial(base, *trials[i]);
    std::vector<const LatentTrial<float>*> ptrs;
    for (const auto& e : encoded) ptrs.push_back(&e);
    return finetune_latents(base, ptrs, config);
  }
  FinetuneResult result{base, {}};
  auto& net = result.model;
  auto adam = AdamState<float>::like(net.params());
  for (int epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t i : shuffled_order(trials.size(), derive_seed(config.seed, 0xF17E, static_cast<std::uint64_t>(epoch)))) {
      auto r = window_loss(net, *trials[i], true);
      numerics::adam_step<float>(net.params(), r.grads, adam, config.finetune_lr());
      total += r.loss;
    }
    result.epoch_losses.push_back(total / static_cast<double>(trials.size()));
    if (config.on_epoch) config.on_epoch(epoch, result.epoch_losses.back());
  }
  return result;
}

}  // namespace stride::training

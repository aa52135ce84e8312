#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "stride/parallel.hpp"
#include "stride/training.hpp"

namespace stride::training {

double fh_ms(int fh_frames) { return fh_frames * 1000.0 / datagen::kFps; }

double ForecastRecord::abs_error() const { return std::abs(prediction - truth); }

std::vector<ForecastRecord> cross_validate(std::span<const Trial* const> trials, const datagen::SubjectProfile& profile,
                                           Task task, const FoldPredictor& predictor,
                                           const CrossValidationOptions& options) {
  const std::size_t n = trials.size();
  if (n < 2) throw std::invalid_argument("cross-validation needs at least 2 trials, got " + std::to_string(n));
  if (options.folds < 0 || options.folds == 1 || static_cast<std::size_t>(options.folds) > n) {
    throw std::invalid_argument("fold count must be 0 (leave-one-out) or in [2, " + std::to_string(n) + "], got " +
                                std::to_string(options.folds));
  }
  const std::size_t folds = options.folds == 0 ? n : static_cast<std::size_t>(options.folds);

  std::vector<std::vector<std::pair<std::size_t, std::array<double, kHorizons>>>> fold_out(folds);
  parallel_for(folds, [&](std::size_t f) {
    std::vector<const Trial*> train;
    std::vector<const Trial*> test;
    std::vector<std::size_t> test_index;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % folds == f) {
        test.push_back(trials[i]);
        test_index.push_back(i);
      } else {
        train.push_back(trials[i]);
      }
    }
    const auto predictions = predictor(train, test);
    if (predictions.size() != test.size()) throw std::logic_error("fold predictor returned the wrong number of forecasts");
    for (std::size_t j = 0; j < test.size(); ++j) fold_out[f].emplace_back(test_index[j], predictions[j]);
  });

  std::vector<ForecastRecord> records;
  records.reserve(n * kHorizons);
  for (const auto& fold : fold_out) {
    for (const auto& [i, predictions] : fold) {
      const Trial& trial = *trials[i];
      for (int k = 1; k <= kHorizons; ++k) {
        ForecastRecord r;
        r.subject = trial.subject;
        r.trial = static_cast<std::uint32_t>(i);
        r.task = task;
        r.fh_frames = k;
        r.fh_ms = fh_ms(k);
        r.torso_vel = trial.torso_velocity;
        r.toe_vel = trial.toe_velocity;
        r.cop_truth_mm = datagen::cop_to_mm(trial.cop_norm, profile.insole_length_mm);
        double y = predictions[static_cast<std::size_t>(k - 1)];
        if (task == Task::Cop) {
          if (options.clamp_cop) y = std::clamp(y, -0.5, 0.5);
          r.prediction = datagen::cop_norm_to_mm_unchecked(y, profile.insole_length_mm);
          r.truth = r.cop_truth_mm;
        } else {
          r.prediction = y * 1000.0;
          r.truth = r.fh_ms;
        }
        records.push_back(r);
      }
    }
  }
  return records;
}

std::vector<ForecastRecord> loocv(const Forecaster<float>& base, std::span<const Trial* const> trials,
                                  const datagen::SubjectProfile& profile, const TrainConfig& config,
                                  const CrossValidationOptions& options) {
  if (base.task() != config.task) {
    throw std::invalid_argument(std::string("loocv: base model task is ") + model::to_string(base.task()) + " but " +
                                model::to_string(config.task) + " was requested");
  }
  TrainConfig fold_config = config;
  fold_config.on_epoch = nullptr;

  if (config.finetune_cnn) {
    FoldPredictor predict = [&](std::span<const Trial* const> train, std::span<const Trial* const> test) {
      const auto tuned = finetune(base, train, fold_config);
      std::vector<std::array<double, kHorizons>> out;
      for (const Trial* t : test) out.push_back(window_predictions(tuned.model, encode_trial(tuned.model, *t)));
      return out;
    };
    return cross_validate(trials, profile, config.task, predict, options);
  }

  // The encoder is frozen, so every fold shares one encoding per trial.
  std::vector<LatentTrial<float>> encoded(trials.size());
  std::unordered_map<const Trial*, std::size_t> index;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    encoded[i] = encode_trial(base, *trials[i]);
    index.emplace(trials[i], i);
  }
  FoldPredictor predict = [&](std::span<const Trial* const> train, std::span<const Trial* const> test) {
    std::vector<const LatentTrial<float>*> latent_train;
    latent_train.reserve(train.size());
    for (const Trial* t : train) latent_train.push_back(&encoded[index.at(t)]);
    const auto tuned = finetune_latents(base, latent_train, fold_config);
    std::vector<std::array<double, kHorizons>> out;
    for (const Trial* t : test) out.push_back(window_predictions(tuned.model, encoded[index.at(t)]));
    return out;
  };
  return cross_validate(trials, profile, config.task, predict, options);
}

}  // namespace stride::training

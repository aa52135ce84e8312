#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stride/datagen.hpp"
#include "stride/forecaster.hpp"

namespace stride::training {

using datagen::Trial;
using model::Forecaster;
using model::Task;
using numerics::Tensor;

inline constexpr int kHorizons = datagen::kForecastHorizons;

struct TrainConfig {
  Task task = Task::Cop;
  double pretrain_lr = 1e-3;
  int pretrain_epochs = 100;
  int finetune_epochs = 250;
  int window = 15;
  std::uint64_t seed = 0;
  /// Fine-tune the conv encoder too. Off by default: the encoder stays at
  /// its pretrained weights and only the recurrent layers adapt, which lets
  /// every fold reuse one set of cached latents.
  bool finetune_cnn = false;
  /// Pretraining gradients reach this many frames before the first loss
  /// frame (truncated BPTT); negative means the whole clip.
  int pretrain_bptt_frames = 15;
  /// Called after each epoch with (epoch, mean loss); may be empty.
  std::function<void(int, double)> on_epoch;

  double finetune_lr() const { return pretrain_lr / 10.0; }
};

/// Regression target for forecast horizon k (frames before impact).
double target_for(Task task, const Trial& trial, int horizon);

// --- losses -----------------------------------------------------------------

template <typename T>
struct LossResult {
  double loss = 0.0;
  /// ŷ_k for k = 1..15 (index k-1), in model units.
  std::array<double, kHorizons> predictions{};
  std::vector<Tensor<T>> grads;
};

/// Mean over k = 1..15 of (y_k − ŷ_k)², where ŷ_k is the final output of the
/// 15-frame window ending at frame impact_idx − k. Gradients cover every
/// parameter; CNN gradients are skipped when `cnn_grads` is false.
template <typename T>
LossResult<T> window_loss(const Forecaster<T>& model, const Trial& trial, bool cnn_grads = true);

/// CNN latents of the 29 frames [impact−29, impact−1] that the 15 windows
/// touch, plus the trial's targets.
template <typename T>
struct LatentTrial {
  const Trial* trial = nullptr;
  std::vector<Tensor<T>> latents;
  std::array<double, kHorizons> targets{};
};

template <typename T>
LatentTrial<T> encode_trial(const Forecaster<T>& model, const Trial& trial);

/// window_loss over cached latents; only recurrent-side gradients are
/// produced (CNN entries stay zero).
template <typename T>
LossResult<T> window_loss_latents(const Forecaster<T>& model, const LatentTrial<T>& trial);

/// Forward-only ŷ_1..ŷ_15 over cached latents.
template <typename T>
std::array<double, kHorizons> window_predictions(const Forecaster<T>& model, const LatentTrial<T>& trial);

/// Static-context loss used for pretraining: both RNNs run from frame 0 to
/// impact−1 and the loss is the mean squared error of the outputs at
/// impact−k, k = 1..15. Gradients are truncated `bptt_frames` frames before
/// the first loss frame (negative: no truncation).
template <typename T>
LossResult<T> static_context_loss(const Forecaster<T>& model, const Trial& trial, int bptt_frames);

/// Forward-only static-context loss (no gradients).
template <typename T>
double static_context_eval(const Forecaster<T>& model, const Trial& trial);

// --- training loops ----------------------------------------------------------

struct PretrainResult {
  Forecaster<float> model;
  /// Entry 0 is the initialized model's mean loss; entry e the mean
  /// pre-update loss during epoch e.
  std::vector<double> epoch_losses;
};

PretrainResult pretrain(const datagen::Dataset& base, const TrainConfig& config,
                        const model::ForecasterConfig& arch = {});

struct FinetuneResult {
  Forecaster<float> model;
  std::vector<double> epoch_losses;  // entry e-1 is epoch e
};

FinetuneResult finetune(const Forecaster<float>& base, std::span<const Trial* const> trials,
                        const TrainConfig& config);

/// Frozen-encoder fine-tuning on pre-encoded trials.
FinetuneResult finetune_latents(const Forecaster<float>& base,
                                std::span<const LatentTrial<float>* const> trials, const TrainConfig& config);

// --- cross-validation ---------------------------------------------------------

struct ForecastRecord {
  std::uint16_t subject = 0;
  std::uint32_t trial = 0;
  Task task = Task::Cop;
  int fh_frames = 0;
  double fh_ms = 0.0;
  double prediction = 0.0;  // mm (COP) or ms (TOI)
  double truth = 0.0;
  double torso_vel = 0.0;
  double toe_vel = 0.0;
  double cop_truth_mm = 0.0;

  double abs_error() const;
  bool operator==(const ForecastRecord&) const = default;
};

double fh_ms(int fh_frames);

/// Trains once on `train` and returns ŷ_1..ŷ_15 (model units) for each
/// trial of `test`, in order.
using FoldPredictor = std::function<std::vector<std::array<double, kHorizons>>(std::span<const Trial* const> train,
                                                                               std::span<const Trial* const> test)>;

struct CrossValidationOptions {
  /// 0 = leave-one-out; otherwise K folds with trial i in fold i mod K.
  int folds = 0;
  /// Clamp COP predictions to [-0.5, 0.5] before converting to mm.
  bool clamp_cop = false;
};

/// Runs the folds (in parallel when workers allow) and returns 15 records
/// per trial, merged in fold order.
std::vector<ForecastRecord> cross_validate(std::span<const Trial* const> trials, const datagen::SubjectProfile& profile,
                                           Task task, const FoldPredictor& predictor,
                                           const CrossValidationOptions& options = {});

/// Per-subject LOOCV (or K-fold): each fold fine-tunes `base` on the
/// training trials and forecasts the held-out ones.
std::vector<ForecastRecord> loocv(const Forecaster<float>& base, std::span<const Trial* const> trials,
                                  const datagen::SubjectProfile& profile, const TrainConfig& config,
                                  const CrossValidationOptions& options = {});

// --- record CSV ---------------------------------------------------------------

inline constexpr const char* kRecordCsvHeader =
    "subject,trial,task,fh_frames,fh_ms,prediction,truth,abs_error,torso_vel,toe_vel,cop_truth_mm";

/// Lines starting with '#' precede the header (e.g. a manifest reference).
void write_records_csv(std::ostream& out, std::span<const ForecastRecord> records,
                       const std::vector<std::string>& comments = {});
std::vector<ForecastRecord> read_records_csv(std::istream& in);
std::vector<ForecastRecord> read_records_csv(const std::filesystem::path& path);

}  // namespace stride::training

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stride/tensor.hpp"

namespace stride::datagen {

inline constexpr int kChannels = 2;
inline constexpr int kHeight = 25;
inline constexpr int kWidth = 50;
inline constexpr std::size_t kFramePixels = kChannels * kHeight * kWidth;
inline constexpr int kTrialFrames = 100;
inline constexpr int kFps = 60;
/// Every trial admits 15 forecast horizons with full 15-frame contexts.
inline constexpr int kMinImpactIndex = 30;
inline constexpr int kForecastHorizons = 15;

enum class Speed : std::uint8_t { Slow = 0, Medium = 1, Fast = 2 };
enum class Strike : std::uint8_t { Rear = 0, Mid = 1, Fore = 2 };

const char* to_string(Speed s);
const char* to_string(Strike s);

/// Commanded approach speed: slow 1000, medium 1250, fast 1500 mm/s.
double commanded_speed_mm_s(Speed s);

/// Which persona population to draw. Base personas feed pretraining and never
/// overlap the evaluation subjects.
enum class PersonaSet { Subjects, Base };

struct SubjectProfile {
  std::uint16_t id = 0;
  float insole_length_mm = 263.2f;
  float cadence_spm = 110.0f;      // steps per minute; sets swing duration
  float swing_arc_scale = 2.4f;    // toe speed bump above approach speed
  float jitter_rows = 0.0f;        // vertical camera jitter amplitude
  float pixel_noise = 0.0f;        // additive pixel noise, intensity levels (≈σ)
  float cop_bias = 0.0f;           // per-subject COP offset (normalized units)
  float cop_noise = 0.0f;          // per-trial COP noise scale
  float sway_cols = 3.0f;          // lateral foot sway amplitude at 15 frames out
  float speed_jitter = 0.0f;       // relative per-trial approach speed jitter
  std::uint64_t noise_seed = 0;

  /// Profile with every stochastic term zeroed.
  static SubjectProfile noise_free(std::uint16_t id);

  bool operator==(const SubjectProfile&) const = default;
};

struct Trial {
  std::uint16_t subject = 0;
  std::uint16_t n_frames = 0;
  std::uint16_t impact_idx = 0;
  float cop_norm = 0.0f;
  float torso_velocity = 0.0f;  // mm/s
  float toe_velocity = 0.0f;    // mm/s
  Speed speed = Speed::Medium;
  Strike strike = Strike::Mid;
  /// n_frames × 2×25×50 raw 8-bit pixels, frame-major.
  std::vector<std::uint8_t> frames;

  std::span<const std::uint8_t> frame(std::size_t t) const {
    return std::span<const std::uint8_t>(frames).subspan(t * kFramePixels, kFramePixels);
  }

  bool operator==(const Trial&) const = default;
};

struct Dataset {
  static constexpr std::uint16_t kFormatVersion = 1;

  std::uint16_t version = kFormatVersion;
  std::uint64_t seed = 0;
  std::vector<SubjectProfile> subjects;
  std::vector<Trial> trials;

  const SubjectProfile& profile(std::uint16_t subject) const;
  /// Trials of one subject in file order; a trial's id is its position here.
  std::vector<const Trial*> trials_of(std::uint16_t subject) const;

  bool operator==(const Dataset&) const = default;
};

/// Overrides for controlled tests; unset fields are drawn from the seed.
struct TrialOptions {
  std::optional<int> landing_offset_cols;  // landing column relative to centre, [-14, 14]
  std::optional<int> impact_idx;           // [30, 98]
};

Trial generate_trial(const SubjectProfile& profile, Speed speed, Strike strike, std::uint64_t seed,
                     const TrialOptions& options = {});

/// Personas are drawn from `seed`; trial k of subject s uses the stream
/// derive_seed(seed, s, k), so generation parallelizes per trial.
Dataset generate_dataset(int n_subjects, int trials_per_subject, std::uint64_t seed,
                         PersonaSet personas = PersonaSet::Subjects);

SubjectProfile sample_profile(std::uint16_t id, std::uint64_t seed, PersonaSet personas);

/// What a noise-free trial reveals about itself, read back from its pixels.
struct InverseReading {
  int impact_idx = -1;
  int landing_offset_cols = 0;
  float cop_norm = 0.0f;
};

/// Closed-form inverse of the renderer on a noise-free trial: the impact frame
/// is the first frame where the sole touches the stair band, and COP follows
/// from the landing column through the same expression the generator uses.
InverseReading invert_noise_free(const Trial& trial);

/// COP of a landing offset before subject bias and noise.
float cop_from_landing_offset(int offset_cols);

/// Mean toe speed over frames [impact-15, impact-3] for the swing model
/// toe(k) = v·(1 + arc·bell(k)).
double mean_toe_speed(double approach_mm_s, double arc_scale, double cadence_spm);

/// Joint min-max normalization over both stereo channels of one frame; a
/// constant frame maps to zeros.
template <typename T>
numerics::Tensor<T> normalize_frame(std::span<const std::uint8_t> raw);

/// (cop + 0.5)·L; cop outside [-0.5, 0.5] is rejected.
double cop_to_mm(double cop_norm, double insole_length_mm);
/// Same affine map without the range check, for unclamped model outputs.
double cop_norm_to_mm_unchecked(double cop_norm, double insole_length_mm);

struct ToiTarget {
  int frames = 0;
  double seconds = 0.0;
  bool in_training_window = false;  // 1 <= frames <= 15
};

ToiTarget toi_targets(int impact_idx, int frame_idx);

struct Covariates {
  double torso_velocity = 0.0;
  double toe_velocity = 0.0;
};

Covariates covariates(const Trial& trial);

// Dataset file, little-endian:
//   "GAIT", u16 version, u64 generator seed, u16 subject count
//   per subject: u16 id, f32 insole length, f32 × 8 persona parameters
//     (cadence, swing arc, jitter, pixel noise, cop bias, cop noise, sway,
//     speed jitter), u64 noise seed
//   u32 trial count
//   per trial: u16 subject id, u16 n_frames, u16 impact_idx, f32 cop_norm,
//     f32 torso velocity, f32 toe velocity, u8 speed, u8 strike,
//     n_frames × 2500 pixel bytes
//   u64 FNV-1a of every preceding byte
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context = "dataset");
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Throws FormatError(InvariantViolation) naming the first broken invariant.
void validate(const Dataset& dataset);

}  // namespace stride::datagen

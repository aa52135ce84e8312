#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "stride/datagen.hpp"
#include "stride/parallel.hpp"
#include "stride/rng.hpp"

namespace stride::datagen {

using numerics::derive_seed;
using numerics::Rng;

namespace {

// Scene layout, in pixels of the 25×50 frame.
constexpr int kBandTop = 17;  // stair edge occupies rows 17..19
constexpr int kBandRows = 3;
constexpr int kFootRows = 5;
constexpr int kFootLeft = 5;  // block spans columns [x-5, x+4]
constexpr int kFootWidth = 10;
constexpr int kMaxGap = 12;
constexpr int kCentreCol = 25;
constexpr int kFootDisparity = 2;
constexpr int kMaxLandingOffset = 14;
constexpr double kCopGain = 0.45;
constexpr std::uint8_t kContactThreshold = 100;  // background never reaches this above the band

struct Kinematics {
  double approach = 0.0;    // mm/s
  double toe_mean = 0.0;    // mm/s
  double gap_rate = 1.0;    // rows per frame
  int landing = 0;          // columns from centre
  double sway_amp = 0.0;
  double sway_phase = 0.0;
  int impact = 0;
};

int gap_rows(const Kinematics& km, int frames_to_impact) {
  if (frames_to_impact <= 0) return 0;
  const int g = static_cast<int>(std::floor(km.gap_rate * frames_to_impact + 0.5));
  return std::min(g, kMaxGap);
}

int foot_column(const Kinematics& km, int frames_to_impact) {
  const int base = kCentreCol + km.landing;
  if (frames_to_impact <= 0) return base;
  const double p = km.sway_phase + 0.1 * frames_to_impact;
  const double tri = 4.0 * std::abs((p - std::floor(p)) - 0.5) - 1.0;
  const double s = km.sway_amp * (frames_to_impact / 15.0) * tri;
  return base + static_cast<int>(std::floor(s + 0.5));
}

int band_disparity(const Kinematics& km, int frames_to_impact) {
  const double distance = km.approach * std::max(frames_to_impact, 0) / kFps;
  return static_cast<int>(std::floor(1200.0 / (300.0 + distance) + 0.5));
}

std::uint8_t scene_pixel(const Kinematics& km, int k, int channel, int row, int col) {
  const int shift = channel == 0 ? 0 : kFootDisparity;
  const int gap = gap_rows(km, k);
  const int bottom = kBandTop - 1 - gap;
  const int left = foot_column(km, k) - kFootLeft + shift;
  if (row <= bottom && row > bottom - kFootRows && col >= left && col < left + kFootWidth) {
    if (row == bottom) return 165;
    const int lr = bottom - row, lc = col - left;
    return ((lr + 2 * lc) % 3 == 0) ? 150 : 125;
  }
  if (row < kBandTop) return static_cast<std::uint8_t>(20 + 2 * row);
  if (row < kBandTop + kBandRows) {
    const int phase = col + (channel == 0 ? 0 : band_disparity(km, k));
    return ((phase / 3) % 2) ? 240 : 200;
  }
  return 85;
}

void render_frame(const Kinematics& km, const SubjectProfile& profile, int t, std::uint64_t frame_seed,
                  std::uint8_t* out) {
  Rng rng(frame_seed);
  const int k = km.impact - t;
  const int dy = profile.jitter_rows > 0.0f
                     ? static_cast<int>(std::floor(profile.jitter_rows * rng.uniform(-1.0, 1.0) + 0.5))
                     : 0;
  for (int ch = 0; ch < kChannels; ++ch) {
    for (int row = 0; row < kHeight; ++row) {
      const int src_row = std::clamp(row - dy, 0, kHeight - 1);
      for (int col = 0; col < kWidth; ++col) {
        double v = scene_pixel(km, k, ch, src_row, col);
        if (profile.pixel_noise > 0.0f) {
          // Unit-variance sum of four uniforms; cheap and libm-free.
          double u = 0.0;
          for (int i = 0; i < 4; ++i) u += rng.uniform();
          v += profile.pixel_noise * (u - 2.0) * 1.7320508075688772;
        }
        v = std::clamp(std::floor(v + 0.5), 0.0, 255.0);
        out[(ch * kHeight + row) * kWidth + col] = static_cast<std::uint8_t>(v);
      }
    }
  }
}

std::pair<int, int> landing_range(Strike strike) {
  switch (strike) {
    case Strike::Rear: return {-kMaxLandingOffset, -5};
    case Strike::Mid: return {-4, 4};
    case Strike::Fore: return {5, kMaxLandingOffset};
  }
  throw std::invalid_argument("unknown strike category");
}

}  // namespace

const char* to_string(Speed s) {
  switch (s) {
    case Speed::Slow: return "slow";
    case Speed::Medium: return "medium";
    case Speed::Fast: return "fast";
  }
  return "?";
}

const char* to_string(Strike s) {
  switch (s) {
    case Strike::Rear: return "rear";
    case Strike::Mid: return "mid";
    case Strike::Fore: return "fore";
  }
  return "?";
}

double commanded_speed_mm_s(Speed s) {
  switch (s) {
    case Speed::Slow: return 1000.0;
    case Speed::Medium: return 1250.0;
    case Speed::Fast: return 1500.0;
  }
  throw std::invalid_argument("unknown speed category");
}

SubjectProfile SubjectProfile::noise_free(std::uint16_t id) {
  SubjectProfile p;
  p.id = id;
  return p;
}

float cop_from_landing_offset(int offset_cols) {
  return static_cast<float>(kCopGain * offset_cols / static_cast<double>(kMaxLandingOffset));
}

double mean_toe_speed(double approach_mm_s, double arc_scale, double cadence_spm) {
  const double swing_frames = 24.0 * 110.0 / cadence_spm;
  double acc = 0.0;
  int n = 0;
  for (int k = 3; k <= 15; ++k, ++n) {
    const double s = k / swing_frames;
    const double bell = (s >= 0.0 && s <= 1.0) ? 4.0 * s * (1.0 - s) : 0.0;
    acc += approach_mm_s * (1.0 + arc_scale * bell);
  }
  return acc / n;
}

Trial generate_trial(const SubjectProfile& profile, Speed speed, Strike strike, std::uint64_t seed,
                     const TrialOptions& options) {
  Rng rng(derive_seed(seed, profile.noise_seed));
  Kinematics km;

  km.impact = 60 + static_cast<int>(rng.below(36));
  if (options.impact_idx) {
    if (*options.impact_idx < kMinImpactIndex || *options.impact_idx > kTrialFrames - 2) {
      throw std::invalid_argument("generate_trial: impact index override out of range");
    }
    km.impact = *options.impact_idx;
  }

  const auto [lo, hi] = landing_range(strike);
  km.landing = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  if (options.landing_offset_cols) {
    if (std::abs(*options.landing_offset_cols) > kMaxLandingOffset) {
      throw std::invalid_argument("generate_trial: landing offset override out of range");
    }
    km.landing = *options.landing_offset_cols;
  }

  km.approach = commanded_speed_mm_s(speed) * (1.0 + profile.speed_jitter * rng.uniform(-1.0, 1.0));
  const double arc = profile.swing_arc_scale * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
  km.toe_mean = mean_toe_speed(km.approach, arc, profile.cadence_spm);
  km.gap_rate = std::clamp(0.9 + 0.5 * (km.toe_mean - 4000.0) / 1000.0, 0.6, 1.4);
  km.sway_amp = profile.sway_cols;
  km.sway_phase = rng.uniform();

  const double cop = cop_from_landing_offset(km.landing) + static_cast<double>(profile.cop_bias) +
                     static_cast<double>(profile.cop_noise) * rng.approx_normal();

  Trial trial;
  trial.subject = profile.id;
  trial.n_frames = kTrialFrames;
  trial.impact_idx = static_cast<std::uint16_t>(km.impact);
  trial.cop_norm = static_cast<float>(std::clamp(cop, -0.5, 0.5));
  trial.torso_velocity = static_cast<float>(km.approach);
  trial.toe_velocity = static_cast<float>(km.toe_mean);
  trial.speed = speed;
  trial.strike = strike;
  trial.frames.resize(kTrialFrames * kFramePixels);
  for (int t = 0; t < kTrialFrames; ++t) {
    render_frame(km, profile, t, derive_seed(seed, 0xF4A3E, static_cast<std::uint64_t>(t)),
                 trial.frames.data() + static_cast<std::size_t>(t) * kFramePixels);
  }
  return trial;
}

SubjectProfile sample_profile(std::uint16_t id, std::uint64_t seed, PersonaSet personas) {
  Rng rng(derive_seed(seed, personas == PersonaSet::Base ? 0xBA5E : 0x5B1E, id));
  SubjectProfile p;
  p.id = id;
  p.insole_length_mm = static_cast<float>(std::floor((240.0 + 40.0 * rng.uniform()) * 10.0) / 10.0);
  p.cadence_spm = static_cast<float>(100.0 + 20.0 * rng.uniform());
  p.swing_arc_scale = static_cast<float>(2.2 + 0.4 * rng.uniform());
  p.jitter_rows = static_cast<float>(0.3 + 0.5 * rng.uniform());
  p.pixel_noise = static_cast<float>(3.0 + 5.0 * rng.uniform());
  p.cop_bias = static_cast<float>(0.04 * rng.uniform(-1.0, 1.0));
  p.cop_noise = static_cast<float>(0.02 + 0.03 * rng.uniform());
  p.sway_cols = static_cast<float>(2.0 + 3.0 * rng.uniform());
  p.speed_jitter = 0.05f;
  p.noise_seed = rng.next_u64();
  return p;
}

Dataset generate_dataset(int n_subjects, int trials_per_subject, std::uint64_t seed, PersonaSet personas) {
  if (n_subjects < 1 || trials_per_subject < 1) {
    throw std::invalid_argument("generate_dataset: need at least one subject and one trial per subject");
  }
  Dataset ds;
  ds.seed = seed;
  const std::uint16_t first_id = personas == PersonaSet::Base ? 1000 : 1;

  struct Job {
    std::size_t subject;
    std::uint64_t index;
    Speed speed;
    Strike strike;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < n_subjects; ++s) {
    const auto id = static_cast<std::uint16_t>(first_id + s);
    ds.subjects.push_back(sample_profile(id, seed, personas));
    // Balanced 3×3 grid: each block of nine trials visits every cell once
    // in a seeded order.
    Rng order(derive_seed(seed, id, 0xCE11));
    std::array<int, 9> cells{};
    for (int i = 0; i < trials_per_subject; ++i) {
      if (i % 9 == 0) {
        for (int c = 0; c < 9; ++c) cells[c] = c;
        for (int c = 8; c > 0; --c) std::swap(cells[c], cells[order.below(static_cast<std::uint64_t>(c + 1))]);
      }
      const int cell = cells[i % 9];
      jobs.push_back({static_cast<std::size_t>(s), static_cast<std::uint64_t>(i), static_cast<Speed>(cell / 3),
                      static_cast<Strike>(cell % 3)});
    }
  }
  ds.trials.resize(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& profile = ds.subjects[job.subject];
    ds.trials[j] = generate_trial(profile, job.speed, job.strike, derive_seed(seed, profile.id, job.index));
  });
  return ds;
}

InverseReading invert_noise_free(const Trial& trial) {
  InverseReading r;
  const int contact_row = kBandTop - 1;
  for (int t = 0; t < trial.n_frames; ++t) {
    const auto f = trial.frame(static_cast<std::size_t>(t));
    for (int col = 0; col < kWidth; ++col) {
      if (f[contact_row * kWidth + col] >= kContactThreshold) {
        r.impact_idx = t;
        r.landing_offset_cols = col + kFootLeft - kCentreCol;
        r.cop_norm = cop_from_landing_offset(r.landing_offset_cols);
        return r;
      }
    }
  }
  return r;
}

const SubjectProfile& Dataset::profile(std::uint16_t subject) const {
  for (const auto& p : subjects) {
    if (p.id == subject) return p;
  }
  throw std::out_of_range("dataset has no subject with id " + std::to_string(subject));
}

std::vector<const Trial*> Dataset::trials_of(std::uint16_t subject) const {
  std::vector<const Trial*> out;
  for (const auto& t : trials) {
    if (t.subject == subject) out.push_back(&t);
  }
  return out;
}

}  // namespace stride::datagen

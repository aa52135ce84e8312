#include <algorithm>
#include <stdexcept>
#include <string>

#include "stride/datagen.hpp"

namespace stride::datagen {

template <typename T>
numerics::Tensor<T> normalize_frame(std::span<const std::uint8_t> raw) {
  if (raw.size() != kFramePixels) {
    throw numerics::ShapeError("normalize_frame: expected " + std::to_string(kFramePixels) + " pixels, got " +
                               std::to_string(raw.size()));
  }
  numerics::Tensor<T> out({kChannels, kHeight, kWidth});
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const int lo = *lo_it, hi = *hi_it;
  if (hi == lo) return out;
  const T range = static_cast<T>(hi - lo);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<T>(raw[i] - lo) / range;
  return out;
}

template numerics::Tensor<float> normalize_frame<float>(std::span<const std::uint8_t>);
template numerics::Tensor<double> normalize_frame<double>(std::span<const std::uint8_t>);

double cop_norm_to_mm_unchecked(double cop_norm, double insole_length_mm) {
  return (cop_norm + 0.5) * insole_length_mm;
}

double cop_to_mm(double cop_norm, double insole_length_mm) {
  if (!(cop_norm >= -0.5 && cop_norm <= 0.5)) {
    throw std::out_of_range("cop_to_mm: normalized COP " + std::to_string(cop_norm) + " outside [-0.5, 0.5]");
  }
  return cop_norm_to_mm_unchecked(cop_norm, insole_length_mm);
}

ToiTarget toi_targets(int impact_idx, int frame_idx) {
  if (frame_idx >= impact_idx) {
    throw std::invalid_argument("toi_targets: frame " + std::to_string(frame_idx) + " is not before impact frame " +
                                std::to_string(impact_idx));
  }
  ToiTarget t;
  t.frames = impact_idx - frame_idx;
  t.seconds = t.frames / static_cast<double>(kFps);
  t.in_training_window = t.frames >= 1 && t.frames <= kForecastHorizons;
  return t;
}

Covariates covariates(const Trial& trial) { return {trial.torso_velocity, trial.toe_velocity}; }

}  // namespace stride::datagen

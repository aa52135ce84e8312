#pragma once

#include <cstdint>
#include <vector>

namespace stride::numerics {

/// SplitMix64 finalizer (Steele, Lea & Flood). Bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derive an independent stream seed from a parent seed and up to two keys.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = mix64(seed ^ 0x6A09E667F3BCC909ULL);
  z = mix64(z ^ (a + 0x9E3779B97F4A7C15ULL));
  z = mix64(z ^ (b + 0xBB67AE8584CAA73BULL));
  return z;
}

/// Counter-based generator. Draw i of a stream is
///   mix64(seed ^ mix64(counter_i * 0x9E3779B97F4A7C15 + 0x632BE59BD9B4E019))
/// so any (seed, counter) pair identifies one output on every platform.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  bool operator==(const RngState&) const = default;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0) : state_{seed, counter} {}
  explicit Rng(RngState state) : state_(state) {}

  const RngState& state() const { return state_; }

  std::uint64_t next_u64() {
    const std::uint64_t c = state_.counter++;
    return mix64(state_.seed ^ mix64(c * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform in [0, n). Uses a 128-bit multiply; bias is below 2^-64·n.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Approximately standard normal: centred sum of 12 uniforms (Irwin–Hall).
  /// Uses only additions so the stream is identical on every libm.
  double approx_normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

  /// Standard normal via Box–Muller (consumes two draws).
  double normal();

 private:
  RngState state_;
};

/// n uniform reals in [0,1); advances `state.counter` by exactly n.
std::vector<double> rng_uniform(RngState& state, std::size_t n);

}  // namespace stride::numerics

#include <set>
#include <stdexcept>

#include "stride/binary_io.hpp"
#include "stride/datagen.hpp"

namespace stride::datagen {

namespace {

void invariant(bool ok, const std::string& what) {
  if (!ok) throw FormatError(FormatErrorKind::InvariantViolation, what);
}

}  // namespace

void validate(const Dataset& ds) {
  std::set<std::uint16_t> ids;
  for (const auto& p : ds.subjects) {
    invariant(ids.insert(p.id).second, "duplicate subject id " + std::to_string(p.id));
    invariant(p.insole_length_mm > 0.0f, "subject " + std::to_string(p.id) + " has non-positive insole length");
  }
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    const auto& t = ds.trials[i];
    const std::string where = "trial " + std::to_string(i) + ": ";
    invariant(ids.count(t.subject) == 1, where + "subject id " + std::to_string(t.subject) + " has no profile");
    invariant(t.impact_idx >= kMinImpactIndex,
              where + "impact_idx " + std::to_string(t.impact_idx) + " < " + std::to_string(kMinImpactIndex));
    invariant(t.impact_idx < t.n_frames, where + "impact_idx beyond the last frame");
    invariant(t.cop_norm >= -0.5f && t.cop_norm <= 0.5f, where + "cop_norm outside [-0.5, 0.5]");
    invariant(t.torso_velocity > 0.0f && t.toe_velocity > 0.0f, where + "velocities must be positive");
    invariant(static_cast<int>(t.speed) <= 2 && static_cast<int>(t.strike) <= 2, where + "unknown category");
    invariant(t.frames.size() == t.n_frames * kFramePixels, where + "frame buffer size mismatch");
  }
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.magic("GAIT");
  w.u16(ds.version);
  w.u64(ds.seed);
  if (ds.subjects.size() > 0xFFFF) throw std::invalid_argument("write_dataset: too many subjects");
  w.u16(static_cast<std::uint16_t>(ds.subjects.size()));
  for (const auto& p : ds.subjects) {
    w.u16(p.id);
    w.f32(p.insole_length_mm);
    for (float v : {p.cadence_spm, p.swing_arc_scale, p.jitter_rows, p.pixel_noise, p.cop_bias, p.cop_noise,
                    p.sway_cols, p.speed_jitter}) {
      w.f32(v);
    }
    w.u64(p.noise_seed);
  }
  w.u32(static_cast<std::uint32_t>(ds.trials.size()));
  for (const auto& t : ds.trials) {
    if (t.frames.size() != t.n_frames * kFramePixels) {
      throw std::invalid_argument("write_dataset: trial frame buffer does not match n_frames");
    }
    w.u16(t.subject);
    w.u16(t.n_frames);
    w.u16(t.impact_idx);
    w.f32(t.cop_norm);
    w.f32(t.torso_velocity);
    w.f32(t.toe_velocity);
    w.u8(static_cast<std::uint8_t>(t.speed));
    w.u8(static_cast<std::uint8_t>(t.strike));
    w.bytes(t.frames);
  }
  w.seal();
  return w.buffer();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("GAIT");
  Dataset ds;
  ds.version = r.u16();
  if (ds.version != Dataset::kFormatVersion) {
    throw FormatError(FormatErrorKind::UnsupportedVersion,
                      context + ": version " + std::to_string(ds.version) + " (supported: " +
                          std::to_string(Dataset::kFormatVersion) + ")");
  }
  ds.seed = r.u64();
  const std::uint16_t n_subjects = r.u16();
  ds.subjects.resize(n_subjects);
  for (auto& p : ds.subjects) {
    p.id = r.u16();
    p.insole_length_mm = r.f32();
    for (float* v : {&p.cadence_spm, &p.swing_arc_scale, &p.jitter_rows, &p.pixel_noise, &p.cop_bias, &p.cop_noise,
                     &p.sway_cols, &p.speed_jitter}) {
      *v = r.f32();
    }
    p.noise_seed = r.u64();
  }
  const std::uint32_t n_trials = r.u32();
  // Each trial needs at least its 20-byte header; reject absurd counts early.
  if (static_cast<std::uint64_t>(n_trials) * 20 > r.remaining()) {
    throw FormatError(FormatErrorKind::Truncated, context + ": trial count exceeds file size");
  }
  ds.trials.resize(n_trials);
  for (auto& t : ds.trials) {
    t.subject = r.u16();
    t.n_frames = r.u16();
    t.impact_idx = r.u16();
    t.cop_norm = r.f32();
    t.torso_velocity = r.f32();
    t.toe_velocity = r.f32();
    t.speed = static_cast<Speed>(r.u8());
    t.strike = static_cast<Strike>(r.u8());
    const auto px = r.bytes(t.n_frames * kFramePixels);
    t.frames.assign(px.begin(), px.end());
  }
  r.verify_seal();
  try {
    validate(ds);
  } catch (const FormatError& e) {
    throw FormatError(FormatErrorKind::InvariantViolation, context + ": " + e.what());
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_dataset(bytes, path.string());
}

}  // namespace stride::datagen

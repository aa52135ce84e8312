#include "stride/weights_io.hpp"

#include <limits>

namespace stride::model {

namespace {

constexpr std::array<int, 3> kStoredPlan{12, 32, 32};

std::uint16_t narrow16(int v, const char* what) {
  if (v < 0 || v > std::numeric_limits<std::uint16_t>::max()) {
    throw std::invalid_argument(std::string("save_weights: ") + what + " does not fit in 16 bits");
  }
  return static_cast<std::uint16_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const Forecaster<float>& model) {
  const auto& cfg = model.config();
  if (cfg.block_channels != kStoredPlan) {
    throw std::invalid_argument("save_weights: the weight format stores only the 12/32/32 channel plan");
  }
  ByteWriter w;
  w.magic("SFW1");
  w.u8(static_cast<std::uint8_t>(cfg.task));
  w.u16(narrow16(cfg.hidden1, "hidden1"));
  w.u16(narrow16(cfg.hidden2, "hidden2"));
  w.u16(narrow16(cfg.channels, "channels"));
  w.u16(narrow16(cfg.height, "height"));
  w.u16(narrow16(cfg.width, "width"));
  w.u16(narrow16(cfg.window, "window"));
  for (const auto& p : model.params()) {
    for (float v : p.values()) w.f32(v);
  }
  w.seal();
  return w.buffer();
}

Forecaster<float> decode_weights(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("SFW1");
  ForecasterConfig cfg;
  const std::uint8_t task = r.u8();
  if (task > 1) throw FormatError(FormatErrorKind::InvariantViolation, context + ": unknown task tag " + std::to_string(task));
  cfg.task = static_cast<Task>(task);
  cfg.hidden1 = r.u16();
  cfg.hidden2 = r.u16();
  cfg.channels = r.u16();
  cfg.height = r.u16();
  cfg.width = r.u16();
  cfg.window = r.u16();
  cfg.block_channels = kStoredPlan;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrorKind::ShapeMismatch, context + ": " + e.what());
  }

  std::size_t expected = 0;
  for (const auto& shape : parameter_shapes(cfg)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    expected += n;
  }
  if (r.remaining() < expected * 4 + 8) {
    throw FormatError(FormatErrorKind::Truncated,
                      context + ": config declares " + std::to_string(expected) + " parameters (" +
                          std::to_string(expected * 4 + 8) + " payload bytes) but only " +
                          std::to_string(r.remaining()) + " bytes remain");
  }
  Forecaster<float> model(cfg);
  for (auto& p : model.params()) {
    for (auto& v : p.values()) v = r.f32();
  }
  r.verify_seal();
  return model;
}

void save_weights(const Forecaster<float>& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_weights(model));
}

Forecaster<float> load_weights(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_weights(bytes, path.string());
}

}  // namespace stride::model

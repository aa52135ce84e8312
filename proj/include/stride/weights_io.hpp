#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stride/binary_io.hpp"
#include "stride/forecaster.hpp"

namespace stride::model {

// Weight file, little-endian:
//   "SFW1"
//   u8  task (0 = COP, 1 = TOI)
//   u16 hidden1, u16 hidden2
//   u16 channels, u16 height, u16 width
//   u16 window length
//   f32 parameter data, tensors in layout order (conv1.1 kernels, conv1.1
//       bias, ..., RNN2 b_rec), each row-major
//   u64 FNV-1a of every preceding byte
//
// The conv channel plan is not stored; files always carry the 2→12→32→32
// plan, so only models with that plan can be saved.

std::vector<std::uint8_t> encode_weights(const Forecaster<float>& model);
Forecaster<float> decode_weights(std::span<const std::uint8_t> bytes, const std::string& context = "weights");

void save_weights(const Forecaster<float>& model, const std::filesystem::path& path);
Forecaster<float> load_weights(const std::filesystem::path& path);

}  // namespace stride::model

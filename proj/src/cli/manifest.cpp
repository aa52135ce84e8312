#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "stride/binary_io.hpp"
#include "stride/cli.hpp"

namespace stride::cli {

using nlohmann::ordered_json;

std::string file_hash(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const FormatError& e) {
    throw IoError(e.what());
  }
  return fmt::format("{:016x}", fnv1a64(bytes));
}

Manifest::Manifest(std::string command, std::map<std::string, std::string> config)
    : command_(std::move(command)), config_(std::move(config)) {}

void Manifest::add_seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

void Manifest::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.filename().string(), file_hash(path));
}

void Manifest::add_output(const std::string& name) { outputs_.push_back(name); }

void Manifest::add_timing(const std::string& name, double seconds) { timings_.emplace_back(name, seconds); }

std::string Manifest::deterministic_json() const {
  ordered_json j;
  j["command"] = command_;
  j["tool_version"] = kToolVersion;
  j["config"] = config_;
  j["seeds"] = seeds_;
  auto& inputs = j["inputs"] = ordered_json::array();
  for (const auto& [name, hash] : inputs_) inputs.push_back({{"file", name}, {"fnv1a64", hash}});
  j["outputs"] = outputs_;
  return j.dump();
}

std::string Manifest::hash() const {
  const auto text = deterministic_json();
  return fmt::format("{:016x}", fnv1a64(std::span<const std::uint8_t>(
                                    reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
}

void Manifest::write_sidecars(const std::filesystem::path& dir) const {
  for (const auto& output : outputs_) {
    ordered_json j = ordered_json::parse(deterministic_json());
    j["manifest_hash"] = hash();
    j["artifact"] = output;
    j["artifact_fnv1a64"] = file_hash(dir / output);
    auto& timings = j["timings_s"] = ordered_json::object();
    for (const auto& [name, seconds] : timings_) timings[name] = seconds;
    const auto path = dir / (output + ".manifest.json");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
}

}  // namespace stride::cli

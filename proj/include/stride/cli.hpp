#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stride/forecaster.hpp"
#include "stride/stream.hpp"

namespace stride::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kValidation = 5,
  kRuntime = 6,
};

/// Entry point shared by the `stride` binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- manifests ----------------------------------------------------------------

/// Provenance record written next to every artifact as
/// `<artifact>.manifest.json`. The hash covers everything except timings,
/// and text artifacts carry it in a leading `# manifest: <hash>` line.
class Manifest {
 public:
  Manifest(std::string command, std::map<std::string, std::string> config);

  void add_seed(const std::string& name, std::uint64_t value);
  /// Records an input by file name and content hash.
  void add_input(const std::filesystem::path& path);
  void add_output(const std::string& name);
  void add_timing(const std::string& name, double seconds);

  /// Hex FNV-1a of the deterministic part.
  std::string hash() const;
  std::string comment() const { return "manifest: " + hash(); }

  /// Writes `<dir>/<output>.manifest.json` for every output, each listing
  /// the output's own content hash.
  void write_sidecars(const std::filesystem::path& dir) const;

 private:
  std::string deterministic_json() const;

  std::string command_;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, double>> timings_;
};

std::string file_hash(const std::filesystem::path& path);

// --- live simulation ------------------------------------------------------------

struct LivesimOptions {
  double duration_s = 120.0;
  double fps = 60.0;
  model::StreamMode mode = model::StreamMode::Windowed;
  /// Extra consumer delay per frame, for exercising backpressure.
  double throttle_ms = 0.0;
  std::uint64_t seed = 0;
  int trial_id = 0;
};

struct FpsReport {
  int trial_id = 0;
  double duration_s = 0.0;   // wall time from first emission to last completion
  std::int64_t frames_emitted = 0;
  std::int64_t frames_processed = 0;
  std::int64_t frames_dropped = 0;
  std::int64_t predictions_cop = 0;
  std::int64_t predictions_toi = 0;
  double effective_fps = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p99_ms = 0.0;
  double latency_max_ms = 0.0;
  model::StreamMode mode = model::StreamMode::Windowed;
  std::string models;
};

/// One producer paced on an absolute monotonic schedule, a depth-2 queue
/// (overflow is a dropped frame) and one consumer running both models.
FpsReport run_livesim(const model::Forecaster<float>& cop, const model::Forecaster<float>& toi,
                      const LivesimOptions& options);

inline constexpr const char* kFpsCsvHeader =
    "run,trial,mode,models,duration_s,frames_emitted,frames_processed,frames_dropped,predictions_cop,"
    "predictions_toi,effective_fps,latency_p50_ms,latency_p99_ms,latency_max_ms";

// --- plots ------------------------------------------------------------------------

struct PlotInputs {
  std::optional<std::filesystem::path> records;
  std::optional<std::filesystem::path> metrics;
};

struct PlotResult {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

/// Writes SVG figures into `out_dir`; every file starts with a comment
/// carrying `manifest_comment`.
PlotResult emit_plots(const PlotInputs& inputs, const std::filesystem::path& out_dir,
                      const std::string& manifest_comment);

}  // namespace stride::cli

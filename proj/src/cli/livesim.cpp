#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "stride/cli.hpp"
#include "stride/rng.hpp"
#include "stride/datagen.hpp"

namespace stride::cli {

namespace {

using Clock = std::chrono::steady_clock;

struct Slot {
  std::int64_t index = 0;
  Clock::time_point emitted;
};

class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t depth) : depth_(depth) {}

  /// False when full (the frame is dropped).
  bool try_push(Slot s) {
    {
      std::lock_guard lock(mu_);
      if (items_.size() >= depth_) return false;
      items_.push_back(s);
    }
    cv_.notify_one();
    return true;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::optional<Slot> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    const Slot s = items_.front();
    items_.pop_front();
    return s;
  }

 private:
  std::size_t depth_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Slot> items_;
  bool closed_ = false;
};

double percentile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

FpsReport run_livesim(const model::Forecaster<float>& cop, const model::Forecaster<float>& toi,
                      const LivesimOptions& options) {
  if (!(options.duration_s > 0.0)) throw std::invalid_argument("livesim duration must be positive");
  if (!(options.fps > 0.0)) throw std::invalid_argument("livesim frame rate must be positive");
  if (cop.task() != model::Task::Cop || toi.task() != model::Task::Toi) {
    throw std::invalid_argument(std::string("livesim needs one COP and one TOI model, got ") +
                                model::to_string(cop.task()) + " and " + model::to_string(toi.task()));
  }

  // Frame source: one synthetic trial replayed in a loop.
  const auto profile = datagen::sample_profile(1, options.seed, datagen::PersonaSet::Subjects);
  const auto trial = datagen::generate_trial(profile, datagen::Speed::Medium, datagen::Strike::Mid,
                                             numerics::derive_seed(options.seed, 0x11FE,
                                                                   static_cast<std::uint64_t>(options.trial_id)));

  const auto total = static_cast<std::int64_t>(std::llround(options.duration_s * options.fps));
  const double period_ns = 1e9 / options.fps;
  BoundedQueue queue(2);
  std::int64_t dropped = 0;

  FpsReport report;
  report.trial_id = options.trial_id;
  report.mode = options.mode;
  report.models = "cop+toi";
  report.frames_emitted = total;

  std::vector<double> latencies;
  latencies.reserve(static_cast<std::size_t>(total));
  Clock::time_point last_done;
  std::exception_ptr consumer_error;

  const Clock::time_point t0 = Clock::now();
  std::thread consumer([&] {
    try {
      model::StreamState<float> cop_state(cop.config(), options.mode);
      model::StreamState<float> toi_state(toi.config(), options.mode);
      while (auto slot = queue.pop()) {
        const auto t = static_cast<std::size_t>(slot->index % trial.n_frames);
        const auto frame = datagen::normalize_frame<float>(trial.frame(t));
        if (model::stream_predict(cop, frame, cop_state)) ++report.predictions_cop;
        if (model::stream_predict(toi, frame, toi_state)) ++report.predictions_toi;
        if (options.throttle_ms > 0.0) {
          std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(options.throttle_ms));
        }
        last_done = Clock::now();
        latencies.push_back(std::chrono::duration<double, std::milli>(last_done - slot->emitted).count());
        ++report.frames_processed;
      }
    } catch (...) {
      consumer_error = std::current_exception();
    }
  });

  for (std::int64_t i = 0; i < total; ++i) {
    const auto due = t0 + std::chrono::nanoseconds(static_cast<std::int64_t>(std::llround(static_cast<double>(i) * period_ns)));
    std::this_thread::sleep_until(due);
    if (!queue.try_push({i, Clock::now()})) ++dropped;
  }
  queue.close();
  consumer.join();
  if (consumer_error) std::rethrow_exception(consumer_error);

  report.frames_dropped = dropped;
  report.duration_s = std::chrono::duration<double>(last_done - t0).count();
  report.effective_fps = report.duration_s > 0.0 ? static_cast<double>(report.frames_processed) / report.duration_s : 0.0;
  std::sort(latencies.begin(), latencies.end());
  report.latency_p50_ms = percentile(latencies, 0.50);
  report.latency_p99_ms = percentile(latencies, 0.99);
  report.latency_max_ms = latencies.empty() ? 0.0 : latencies.back();
  return report;
}

}  // namespace stride::cli

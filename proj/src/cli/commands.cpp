#include <chrono>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stride/cli.hpp"
#include "stride/eval.hpp"
#include "stride/lmm.hpp"
#include "stride/rng.hpp"
#include "stride/weights_io.hpp"

namespace stride::cli {

namespace fs = std::filesystem;
using numerics::derive_seed;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<model::Task> tasks_of(const std::string& name) {
  if (name == "both") return {model::Task::Cop, model::Task::Toi};
  if (name == "cop") return {model::Task::Cop};
  if (name == "toi") return {model::Task::Toi};
  throw UsageError("--task must be cop, toi or both, got '" + name + "'");
}

int parse_folds(const std::string& folds) {
  if (folds == "loo") return 0;
  try {
    std::size_t used = 0;
    const int k = std::stoi(folds, &used);
    if (used == folds.size() && k >= 2) return k;
  } catch (const std::exception&) {
  }
  throw UsageError("--folds must be 'loo' or an integer K >= 2, got '" + folds + "'");
}

std::string weights_name(model::Task task) { return std::string("weights_") + model::to_string(task) + ".sfw"; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void require_file(const fs::path& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw IoError(flag + ": no such file " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

fs::path weights_path(const std::optional<fs::path>& dir, const std::optional<fs::path>& explicit_path,
                      model::Task task) {
  if (explicit_path) return *explicit_path;
  if (!dir) throw UsageError(std::string("give --model-dir or --") + model::to_string(task) + "-weights");
  return *dir / weights_name(task);
}

model::Forecaster<float> load_checked(const fs::path& path, model::Task expected) {
  require_file(path, "weights");
  auto m = model::load_weights(path);
  if (m.task() != expected) {
    throw std::invalid_argument(path.string() + " holds a " + model::to_string(m.task()) + " model, expected " +
                                model::to_string(expected));
  }
  return m;
}

// --- gen -----------------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  int subjects = 8;
  int trials = 90;
  bool base = false;
  fs::path out;
};

fs::path cmd_gen(const GenArgs& a, std::ostream& log) {
  Stopwatch clock;
  if (a.subjects < 1 || a.trials < 1) throw std::invalid_argument("--subjects and --trials must be positive");
  ensure_dir(a.out);
  const std::string name = a.base ? "base.gait" : "dataset.gait";
  Manifest manifest("gen", {{"subjects", std::to_string(a.subjects)},
                            {"trials", std::to_string(a.trials)},
                            {"personas", a.base ? "base" : "subjects"}});
  manifest.add_seed("seed", a.seed);
  manifest.add_output(name);
  const auto ds = datagen::generate_dataset(a.subjects, a.trials, a.seed,
                                            a.base ? datagen::PersonaSet::Base : datagen::PersonaSet::Subjects);
  datagen::write_dataset(ds, a.out / name);
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
  log << fmt::format("wrote {} ({} subjects x {} trials, manifest {})\n", (a.out / name).string(), a.subjects,
                     a.trials, manifest.hash());
  return a.out / name;
}

// --- pretrain --------------------------------------------------------------------

struct PretrainArgs {
  std::uint64_t seed = 0;
  fs::path base_data;
  std::string task = "both";
  int epochs = 100;
  int bptt_frames = 15;
  double lr = 1e-3;
  fs::path out;
};

void cmd_pretrain(const PretrainArgs& a, std::ostream& log) {
  Stopwatch clock;
  const auto tasks = tasks_of(a.task);
  if (a.epochs < 0) throw UsageError("--epochs must be non-negative");
  require_file(a.base_data, "--base-data");
  ensure_dir(a.out);
  Manifest manifest("pretrain", {{"task", a.task},
                                 {"epochs", std::to_string(a.epochs)},
                                 {"bptt_frames", std::to_string(a.bptt_frames)},
                                 {"lr", num(a.lr)}});
  manifest.add_seed("seed", a.seed);
  manifest.add_input(a.base_data);
  for (auto t : tasks) manifest.add_output(weights_name(t));
  manifest.add_output("pretrain_loss.csv");

  const auto base = datagen::read_dataset(a.base_data);
  auto loss_csv = open_out(a.out / "pretrain_loss.csv");
  loss_csv << "# " << manifest.comment() << "\ntask,epoch,loss\n";
  for (auto task : tasks) {
    Stopwatch task_clock;
    training::TrainConfig cfg;
    cfg.task = task;
    cfg.pretrain_epochs = a.epochs;
    cfg.pretrain_lr = a.lr;
    cfg.pretrain_bptt_frames = a.bptt_frames;
    cfg.seed = derive_seed(a.seed, 0x97E, static_cast<std::uint64_t>(task));
    cfg.on_epoch = [&](int epoch, double loss) {
      log << fmt::format("pretrain {} epoch {}/{} loss {:.6g}\n", model::to_string(task), epoch, a.epochs, loss);
    };
    const auto result = training::pretrain(base, cfg);
    model::save_weights(result.model, a.out / weights_name(task));
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      loss_csv << fmt::format("{},{},{}\n", model::to_string(task), e, result.epoch_losses[e]);
    }
    manifest.add_timing(std::string("pretrain_") + model::to_string(task), task_clock.seconds());
  }
  loss_csv.close();
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
  log << fmt::format("pretrained {} model(s) into {} (manifest {})\n", tasks.size(), a.out.string(), manifest.hash());
}

// --- finetune ----------------------------------------------------------------------

struct FinetuneArgs {
  std::uint64_t seed = 0;
  fs::path data;
  std::optional<fs::path> model_dir, cop_weights, toi_weights;
  std::string task = "both";
  int subject = -1;
  int epochs = 250;
  double lr = 1e-4;
  bool finetune_cnn = false;
  fs::path out;
};

void cmd_finetune(const FinetuneArgs& a, std::ostream& log) {
  Stopwatch clock;
  const auto tasks = tasks_of(a.task);
  if (a.epochs < 0) throw UsageError("--epochs must be non-negative");
  require_file(a.data, "--data");
  const auto ds = datagen::read_dataset(a.data);
  const auto trials = ds.trials_of(static_cast<std::uint16_t>(a.subject));
  if (a.subject < 0 || trials.empty()) throw std::invalid_argument(fmt::format("subject {} has no trials", a.subject));
  ensure_dir(a.out);

  Manifest manifest("finetune", {{"task", a.task},
                                 {"subject", std::to_string(a.subject)},
                                 {"epochs", std::to_string(a.epochs)},
                                 {"lr", num(a.lr)},
                                 {"finetune_cnn", a.finetune_cnn ? "true" : "false"}});
  manifest.add_seed("seed", a.seed);
  manifest.add_input(a.data);
  std::vector<std::pair<model::Task, model::Forecaster<float>>> bases;
  for (auto t : tasks) {
    const auto path = weights_path(a.model_dir, t == model::Task::Cop ? a.cop_weights : a.toi_weights, t);
    bases.emplace_back(t, load_checked(path, t));
    manifest.add_input(path);
  }
  auto out_name = [&](model::Task t) {
    return fmt::format("weights_{}_s{}.sfw", model::to_string(t), a.subject);
  };
  for (auto t : tasks) manifest.add_output(out_name(t));
  manifest.add_output("finetune_loss.csv");

  auto loss_csv = open_out(a.out / "finetune_loss.csv");
  loss_csv << "# " << manifest.comment() << "\ntask,subject,epoch,loss\n";
  for (auto& [task, base] : bases) {
    training::TrainConfig cfg;
    cfg.task = task;
    cfg.finetune_epochs = a.epochs;
    cfg.pretrain_lr = a.lr * 10.0;
    cfg.finetune_cnn = a.finetune_cnn;
    cfg.seed = derive_seed(a.seed, static_cast<std::uint64_t>(a.subject), static_cast<std::uint64_t>(task));
    const auto result = training::finetune(base, trials, cfg);
    model::save_weights(result.model, a.out / out_name(task));
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      loss_csv << fmt::format("{},{},{},{}\n", model::to_string(task), a.subject, e + 1, result.epoch_losses[e]);
    }
  }
  loss_csv.close();
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
  log << fmt::format("fine-tuned subject {} into {} (manifest {})\n", a.subject, a.out.string(), manifest.hash());
}

// --- loocv -------------------------------------------------------------------------

struct LoocvArgs {
  std::uint64_t seed = 0;
  fs::path data;
  std::optional<fs::path> model_dir, cop_weights, toi_weights;
  std::string task = "both";
  std::string folds = "loo";
  int epochs = 250;
  double lr = 1e-4;
  bool clamp_cop = false;
  bool finetune_cnn = false;
  std::vector<int> subjects;
  fs::path out;
};

fs::path cmd_loocv(const LoocvArgs& a, std::ostream& log) {
  Stopwatch clock;
  const auto tasks = tasks_of(a.task);
  const int folds = parse_folds(a.folds);
  if (a.epochs < 0) throw UsageError("--epochs must be non-negative");
  require_file(a.data, "--data");
  const auto ds = datagen::read_dataset(a.data);
  ensure_dir(a.out);

  std::vector<std::uint16_t> subjects;
  if (a.subjects.empty()) {
    for (const auto& p : ds.subjects) subjects.push_back(p.id);
  } else {
    for (int s : a.subjects) {
      if (s < 0 || s > 0xFFFF || ds.trials_of(static_cast<std::uint16_t>(s)).empty()) {
        throw std::invalid_argument(fmt::format("subject {} is not in {}", s, a.data.string()));
      }
      subjects.push_back(static_cast<std::uint16_t>(s));
    }
  }

  std::string subject_list;
  for (auto s : subjects) subject_list += (subject_list.empty() ? "" : " ") + std::to_string(s);
  Manifest manifest("loocv", {{"task", a.task},
                              {"folds", a.folds},
                              {"epochs", std::to_string(a.epochs)},
                              {"lr", num(a.lr)},
                              {"clamp_cop", a.clamp_cop ? "true" : "false"},
                              {"finetune_cnn", a.finetune_cnn ? "true" : "false"},
                              {"subjects", subject_list}});
  manifest.add_seed("seed", a.seed);
  manifest.add_input(a.data);
  std::vector<std::pair<model::Task, model::Forecaster<float>>> bases;
  for (auto t : tasks) {
    const auto path = weights_path(a.model_dir, t == model::Task::Cop ? a.cop_weights : a.toi_weights, t);
    bases.emplace_back(t, load_checked(path, t));
    manifest.add_input(path);
  }
  manifest.add_output("records.csv");

  std::vector<training::ForecastRecord> records;
  for (auto s : subjects) {
    const auto trials = ds.trials_of(s);
    for (auto& [task, base] : bases) {
      Stopwatch subject_clock;
      training::TrainConfig cfg;
      cfg.task = task;
      cfg.finetune_epochs = a.epochs;
      cfg.pretrain_lr = a.lr * 10.0;
      cfg.finetune_cnn = a.finetune_cnn;
      cfg.seed = derive_seed(a.seed, s, static_cast<std::uint64_t>(task));
      training::CrossValidationOptions cv{folds, a.clamp_cop};
      auto recs = training::loocv(base, trials, ds.profile(s), cfg, cv);
      records.insert(records.end(), recs.begin(), recs.end());
      const double t = subject_clock.seconds();
      manifest.add_timing(fmt::format("subject_{}_{}", s, model::to_string(task)), t);
      log << fmt::format("loocv subject {} {}: {} trials, {:.1f} s\n", s, model::to_string(task), trials.size(), t);
    }
  }
  {
    auto out = open_out(a.out / "records.csv");
    training::write_records_csv(out, records, {manifest.comment()});
  }
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
  log << fmt::format("wrote {} records to {} (manifest {})\n", records.size(), (a.out / "records.csv").string(),
                     manifest.hash());
  return a.out / "records.csv";
}

// --- eval --------------------------------------------------------------------------

struct EvalArgs {
  fs::path records;
  double split_ms = 166.67;
  std::uint64_t seed = 0;
  std::size_t resamples = 10000;
  fs::path out;
};

void cmd_eval(const EvalArgs& a, std::ostream& log) {
  Stopwatch clock;
  require_file(a.records, "--records");
  if (a.resamples < 1) throw UsageError("--bootstrap must be positive");
  ensure_dir(a.out);
  Manifest manifest("eval", {{"fh_split_ms", num(a.split_ms)}, {"bootstrap", std::to_string(a.resamples)}});
  manifest.add_seed("seed", a.seed);
  manifest.add_input(a.records);
  for (const char* n : {"fh_metrics.csv", "residual_regression.csv", "boxplots.csv", "summary.csv"}) {
    manifest.add_output(n);
  }
  const auto records = training::read_records_csv(a.records);
  if (records.empty()) log << "warning: " << a.records.string() << " has no records\n";
  const auto report = eval::evaluate(records, {a.seed, a.resamples, a.split_ms});
  const std::vector<std::string> comments{manifest.comment()};
  {
    auto out = open_out(a.out / "fh_metrics.csv");
    eval::write_metrics_csv(out, report.metrics, comments);
  }
  {
    auto out = open_out(a.out / "residual_regression.csv");
    eval::write_regressions_csv(out, report.regressions, comments);
  }
  {
    auto out = open_out(a.out / "boxplots.csv");
    eval::write_boxes_csv(out, report.boxes, comments);
  }
  {
    auto out = open_out(a.out / "summary.csv");
    eval::write_summary_csv(out, report.summary, comments);
  }
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
  log << fmt::format("evaluated {} records into {} (manifest {})\n", records.size(), a.out.string(), manifest.hash());
}

// --- lmm -----------------------------------------------------------------------------

struct LmmArgs {
  fs::path records;
  std::string task = "both";
  double alpha = 0.05;
  double toi_max_fh_ms = 166.67;
  fs::path out;
};

void cmd_lmm(const LmmArgs& a, std::ostream& log) {
  Stopwatch clock;
  const auto tasks = tasks_of(a.task);
  require_file(a.records, "--records");
  ensure_dir(a.out);
  Manifest manifest("lmm", {{"task", a.task}, {"alpha", num(a.alpha)}, {"toi_max_fh_ms", num(a.toi_max_fh_ms)}});
  manifest.add_input(a.records);
  manifest.add_output("lmm_report.csv");
  manifest.add_output("lmm_diagnostics.csv");
  const auto records = training::read_records_csv(a.records);
  lmm::AnalysisOptions opts;
  opts.alpha = a.alpha;
  opts.toi_max_fh_ms = a.toi_max_fh_ms;
  std::vector<lmm::Analysis> analyses;
  for (auto t : tasks) {
    const auto subset = eval::filter(records, t);
    if (subset.empty()) {
      log << "warning: no " << model::to_string(t) << " records; skipping\n";
      continue;
    }
    analyses.push_back(lmm::analyze(records, t, opts));
    const auto& conv = analyses.back().final_fit.fit.convergence;
    if (!conv.converged) log << "warning: " << model::to_string(t) << " fit: " << conv.message << '\n';
  }
  const std::vector<std::string> comments{manifest.comment()};
  {
    auto out = open_out(a.out / "lmm_report.csv");
    lmm::write_report_csv(out, analyses, comments);
  }
  {
    auto out = open_out(a.out / "lmm_diagnostics.csv");
    lmm::write_diagnostics_csv(out, analyses, comments);
  }
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
  log << fmt::format("wrote LMM report for {} task(s) into {} (manifest {})\n", analyses.size(), a.out.string(),
                     manifest.hash());
}

// --- plots -----------------------------------------------------------------------------

struct PlotArgs {
  std::optional<fs::path> records, metrics;
  fs::path out;
};

void cmd_plots(const PlotArgs& a, std::ostream& log, std::ostream& err) {
  Stopwatch clock;
  if (!a.records && !a.metrics) throw UsageError("plots: give --records and/or --metrics");
  if (a.records) require_file(*a.records, "--records");
  if (a.metrics) require_file(*a.metrics, "--metrics");
  ensure_dir(a.out);
  Manifest manifest("plots", {});
  if (a.records) manifest.add_input(*a.records);
  if (a.metrics) manifest.add_input(*a.metrics);
  // Output names depend on the inputs' contents, so the manifest hash covers
  // the inputs only; the sidecars list each file.
  const auto result = emit_plots({a.records, a.metrics}, a.out, manifest.comment());
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  Manifest sidecars = manifest;
  for (const auto& f : result.files) sidecars.add_output(f);
  sidecars.add_timing("total", clock.seconds());
  sidecars.write_sidecars(a.out);
  log << fmt::format("wrote {} plot(s) into {} (manifest {})\n", result.files.size(), a.out.string(),
                     manifest.hash());
}

// --- livesim ---------------------------------------------------------------------------

struct LivesimArgs {
  std::optional<fs::path> model_dir, cop_weights, toi_weights;
  double duration_s = 120.0;
  std::string mode = "windowed";
  int repeats = 3;
  double throttle_ms = 0.0;
  std::uint64_t seed = 0;
  fs::path out;
};

void cmd_livesim(const LivesimArgs& a, std::ostream& log) {
  Stopwatch clock;
  if (!(a.duration_s > 0.0)) throw UsageError("--duration-s must be positive");
  if (a.repeats < 1) throw UsageError("--repeats must be positive");
  const auto mode = model::parse_stream_mode(a.mode);
  const auto cop_path = weights_path(a.model_dir, a.cop_weights, model::Task::Cop);
  const auto toi_path = weights_path(a.model_dir, a.toi_weights, model::Task::Toi);
  require_file(cop_path, "--cop-weights");
  require_file(toi_path, "--toi-weights");
  const auto cop = model::load_weights(cop_path);
  const auto toi = model::load_weights(toi_path);
  if (cop.task() != model::Task::Cop || toi.task() != model::Task::Toi) {
    throw std::invalid_argument(fmt::format("livesim needs one COP and one TOI model, got {} and {}",
                                            model::to_string(cop.task()), model::to_string(toi.task())));
  }
  ensure_dir(a.out);
  Manifest manifest("livesim", {{"duration_s", num(a.duration_s)},
                                {"mode", model::to_string(mode)},
                                {"repeats", std::to_string(a.repeats)},
                                {"throttle_ms", num(a.throttle_ms)}});
  manifest.add_seed("seed", a.seed);
  manifest.add_input(cop_path);
  manifest.add_input(toi_path);
  manifest.add_output("fps.csv");

  auto csv = open_out(a.out / "fps.csv");
  csv << "# " << manifest.comment() << '\n' << kFpsCsvHeader << '\n';
  for (int r = 0; r < a.repeats; ++r) {
    LivesimOptions opts;
    opts.duration_s = a.duration_s;
    opts.mode = mode;
    opts.throttle_ms = a.throttle_ms;
    opts.seed = a.seed;
    opts.trial_id = r;
    const auto rep = run_livesim(cop, toi, opts);
    csv << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r + 1, rep.trial_id, model::to_string(rep.mode),
                       rep.models, rep.duration_s, rep.frames_emitted, rep.frames_processed, rep.frames_dropped,
                       rep.predictions_cop, rep.predictions_toi, rep.effective_fps, rep.latency_p50_ms,
                       rep.latency_p99_ms, rep.latency_max_ms);
    csv.flush();
    log << fmt::format(
        "run {}: {:.3f} FPS over {:.2f} s, {} processed, {} dropped, latency p50 {:.3f} ms p99 {:.3f} ms max {:.3f} ms\n",
        r + 1, rep.effective_fps, rep.duration_s, rep.frames_processed, rep.frames_dropped, rep.latency_p50_ms,
        rep.latency_p99_ms, rep.latency_max_ms);
    if (rep.frames_dropped > 0) log << fmt::format("warning: run {} dropped {} frame(s)\n", r + 1, rep.frames_dropped);
  }
  csv.close();
  manifest.add_timing("total", clock.seconds());
  manifest.write_sidecars(a.out);
}

// --- pipeline ---------------------------------------------------------------------------

struct PipelineArgs {
  std::uint64_t seed = 0;
  int subjects = 4;
  int trials = 24;
  int base_subjects = 4;
  int base_trials = 24;
  int pretrain_epochs = 100;
  int epochs = 250;
  std::string folds = "8";
  std::string task = "both";
  bool clamp_cop = false;
  fs::path out;
};

void cmd_pipeline(const PipelineArgs& a, std::ostream& log, std::ostream& err) {
  const fs::path data_dir = a.out / "data", model_dir = a.out / "models", cv_dir = a.out / "loocv",
                 eval_dir = a.out / "eval", lmm_dir = a.out / "lmm", plot_dir = a.out / "plots";
  const auto data = cmd_gen({derive_seed(a.seed, 0xDA7A), a.subjects, a.trials, false, data_dir}, log);
  const auto base = cmd_gen({derive_seed(a.seed, 0xBA5E), a.base_subjects, a.base_trials, true, data_dir}, log);
  PretrainArgs pre;
  pre.seed = derive_seed(a.seed, 0x97E);
  pre.base_data = base;
  pre.task = a.task;
  pre.epochs = a.pretrain_epochs;
  pre.out = model_dir;
  cmd_pretrain(pre, log);
  LoocvArgs cv;
  cv.seed = derive_seed(a.seed, 0xC5);
  cv.data = data;
  cv.model_dir = model_dir;
  cv.task = a.task;
  cv.folds = a.folds;
  cv.epochs = a.epochs;
  cv.clamp_cop = a.clamp_cop;
  cv.out = cv_dir;
  const auto records = cmd_loocv(cv, log);
  EvalArgs ev;
  ev.records = records;
  ev.seed = derive_seed(a.seed, 0xE7A1);
  ev.out = eval_dir;
  cmd_eval(ev, log);
  LmmArgs lm;
  lm.records = records;
  lm.task = a.task;
  lm.out = lmm_dir;
  cmd_lmm(lm, log);
  cmd_plots({records, eval_dir / "fh_metrics.csv", plot_dir}, log, err);
}

// --- dispatch -------------------------------------------------------------------------

template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    fn();
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return e.kind() == FormatErrorKind::Io ? kIo : kFormat;
  } catch (const std::invalid_argument& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::out_of_range& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
}

void add_weight_options(CLI::App* cmd, std::optional<fs::path>& dir, std::optional<fs::path>& cop,
                        std::optional<fs::path>& toi) {
  cmd->add_option("--model-dir", dir, "Directory holding weights_cop.sfw and weights_toi.sfw");
  cmd->add_option("--cop-weights", cop, "COP weight file (overrides --model-dir)");
  cmd->add_option("--toi-weights", toi, "TOI weight file (overrides --model-dir)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stair-strike forecasting toolkit: synthetic data, training, evaluation and live benchmark",
               "stride"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic stereo-depth dataset");
  c_gen->add_option("--seed", gen.seed, "Master seed")->required();
  c_gen->add_option("--subjects", gen.subjects, "Number of subjects")->capture_default_str();
  c_gen->add_option("--trials", gen.trials, "Trials per subject")->capture_default_str();
  c_gen->add_flag("--base", gen.base, "Draw the disjoint pretraining personas (writes base.gait)");
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "Pretrain COP/TOI models on a base dataset");
  c_pre->add_option("--seed", pre.seed, "Master seed")->required();
  c_pre->add_option("--base-data", pre.base_data, "Base dataset (.gait)")->required();
  c_pre->add_option("--task", pre.task, "cop, toi or both")->capture_default_str();
  c_pre->add_option("--epochs", pre.epochs, "Pretraining epochs")->capture_default_str();
  c_pre->add_option("--bptt-frames", pre.bptt_frames, "Truncation depth before the first loss frame (-1: none)")
      ->capture_default_str();
  c_pre->add_option("--lr", pre.lr, "Adam learning rate")->capture_default_str();
  c_pre->add_option("--out", pre.out, "Output directory")->required();

  FinetuneArgs ft;
  auto* c_ft = app.add_subcommand("finetune", "Fine-tune pretrained models on all trials of one subject");
  c_ft->add_option("--seed", ft.seed, "Master seed")->required();
  c_ft->add_option("--data", ft.data, "Subject dataset (.gait)")->required();
  add_weight_options(c_ft, ft.model_dir, ft.cop_weights, ft.toi_weights);
  c_ft->add_option("--subject", ft.subject, "Subject id")->required();
  c_ft->add_option("--task", ft.task, "cop, toi or both")->capture_default_str();
  c_ft->add_option("--epochs", ft.epochs, "Fine-tuning epochs")->capture_default_str();
  c_ft->add_option("--lr", ft.lr, "Adam learning rate")->capture_default_str();
  c_ft->add_flag("--finetune-cnn", ft.finetune_cnn, "Also update the conv encoder");
  c_ft->add_option("--out", ft.out, "Output directory")->required();

  LoocvArgs cv;
  auto* c_cv = app.add_subcommand("loocv", "Per-subject cross-validated fine-tuning; writes records.csv");
  c_cv->add_option("--seed", cv.seed, "Master seed")->required();
  c_cv->add_option("--data", cv.data, "Subject dataset (.gait)")->required();
  add_weight_options(c_cv, cv.model_dir, cv.cop_weights, cv.toi_weights);
  c_cv->add_option("--task", cv.task, "cop, toi or both")->capture_default_str();
  c_cv->add_option("--folds", cv.folds, "loo or K")->capture_default_str();
  c_cv->add_option("--epochs", cv.epochs, "Fine-tuning epochs per fold")->capture_default_str();
  c_cv->add_option("--lr", cv.lr, "Adam learning rate")->capture_default_str();
  c_cv->add_option("--subject", cv.subjects, "Restrict to these subject ids (repeatable)");
  c_cv->add_flag("--clamp-cop", cv.clamp_cop, "Clamp COP forecasts to the insole");
  c_cv->add_flag("--finetune-cnn", cv.finetune_cnn, "Also update the conv encoder");
  c_cv->add_option("--out", cv.out, "Output directory")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Metrics, residual regressions and boxplots from records.csv");
  c_ev->add_option("--records", ev.records, "Record CSV")->required();
  c_ev->add_option("--fh-split-ms", ev.split_ms, "Piecewise split of the fTOI curve")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "Bootstrap seed")->capture_default_str();
  c_ev->add_option("--bootstrap", ev.resamples, "Bootstrap resamples")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Output directory")->required();

  LmmArgs lm;
  auto* c_lm = app.add_subcommand("lmm", "Linear mixed-model analysis of absolute errors");
  c_lm->add_option("--records", lm.records, "Record CSV")->required();
  c_lm->add_option("--task", lm.task, "cop, toi or both")->capture_default_str();
  c_lm->add_option("--alpha", lm.alpha, "Significance level for dropping effects")->capture_default_str();
  c_lm->add_option("--toi-max-fh-ms", lm.toi_max_fh_ms, "Largest TOI horizon entering the fit")->capture_default_str();
  c_lm->add_option("--out", lm.out, "Output directory")->required();

  PlotArgs pl;
  auto* c_pl = app.add_subcommand("plots", "SVG figures from record and metric CSVs");
  c_pl->add_option("--records", pl.records, "Record CSV");
  c_pl->add_option("--metrics", pl.metrics, "fh_metrics.csv from eval");
  c_pl->add_option("--out", pl.out, "Output directory")->required();

  LivesimArgs ls;
  auto* c_ls = app.add_subcommand("livesim", "Paced 60 FPS benchmark running both models");
  add_weight_options(c_ls, ls.model_dir, ls.cop_weights, ls.toi_weights);
  c_ls->add_option("--duration-s", ls.duration_s, "Seconds per run")->capture_default_str();
  c_ls->add_option("--mode", ls.mode, "windowed or continuous")->capture_default_str();
  c_ls->add_option("--repeats", ls.repeats, "Number of runs")->capture_default_str();
  c_ls->add_option("--throttle-ms", ls.throttle_ms, "Artificial consumer delay per frame")->capture_default_str();
  c_ls->add_option("--seed", ls.seed, "Frame source seed")->capture_default_str();
  c_ls->add_option("--out", ls.out, "Output directory")->required();

  PipelineArgs pp;
  auto* c_pp = app.add_subcommand("pipeline", "gen, pretrain, loocv, eval, lmm and plots in one go");
  c_pp->add_option("--seed", pp.seed, "Master seed")->required();
  c_pp->add_option("--subjects", pp.subjects, "Subjects")->capture_default_str();
  c_pp->add_option("--trials", pp.trials, "Trials per subject")->capture_default_str();
  c_pp->add_option("--base-subjects", pp.base_subjects, "Pretraining personas")->capture_default_str();
  c_pp->add_option("--base-trials", pp.base_trials, "Trials per pretraining persona")->capture_default_str();
  c_pp->add_option("--pretrain-epochs", pp.pretrain_epochs, "Pretraining epochs")->capture_default_str();
  c_pp->add_option("--epochs", pp.epochs, "Fine-tuning epochs per fold")->capture_default_str();
  c_pp->add_option("--folds", pp.folds, "loo or K")->capture_default_str();
  c_pp->add_option("--task", pp.task, "cop, toi or both")->capture_default_str();
  c_pp->add_flag("--clamp-cop", pp.clamp_cop, "Clamp COP forecasts to the insole");
  c_pp->add_option("--out", pp.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  }

  return guarded(
      [&] {
        if (*c_gen) cmd_gen(gen, out);
        else if (*c_pre) cmd_pretrain(pre, out);
        else if (*c_ft) cmd_finetune(ft, out);
        else if (*c_cv) cmd_loocv(cv, out);
        else if (*c_ev) cmd_eval(ev, out);
        else if (*c_lm) cmd_lmm(lm, out);
        else if (*c_pl) cmd_plots(pl, out, err);
        else if (*c_ls) cmd_livesim(ls, out);
        else if (*c_pp) cmd_pipeline(pp, out, err);
      },
      err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace stride::cli

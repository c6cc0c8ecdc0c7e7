// mpar: skeleton-based motion classification for manual processes.
// Subcommands: synth, check, train, search, eval, predict, report.

#include <filesystem>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpar/csv.hpp"
#include "mpar/model_io.hpp"
#include "mpar/report_io.hpp"
#include "mpar/runconfig.hpp"
#include "mpar/synthgen.hpp"

namespace fs = std::filesystem;
using namespace mpar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Args {
  std::string config;
  std::string data;
  std::string out;
  std::string model;
  std::string space;
  std::string log;
  std::string strategy = "surrogate";
  uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
  int budget = 20;
  int stages = 1;
  double quantile = 0.2;
  int fps = 0;
  int window = 0;
  int anchor_class = 1;
  int margin = 15;
  int smooth_k = 31;
  int workers = 9;
  int repeats = 5;
  double dropout = -1;
  double error_prob = -1;
  bool generalization_only = false;
  double max_history = 0;
};


int cmd_synth(const Args& args) {
  SynthSpec spec = default_synth_spec();
  spec.n_workers = args.workers;
  spec.repeats = args.repeats;
  if (args.dropout >= 0) spec.dropout_prob = args.dropout;
  if (args.error_prob >= 0) spec.error_burst_prob = args.error_prob;
  SynthResult result = generate(spec, args.seed);
  write_synth_dataset(result, args.out);
  SynthStats stats = describe(spec);
  std::cout << "wrote " << result.workers.size() << " worker streams to " << args.out
            << " (~" << static_cast<int64_t>(stats.frames_per_worker_estimate)
            << " frames each, cycle ~" << stats.cycle_duration_s << " s)\n";
  return kExitOk;
}

int cmd_check(const Args& args) {
  if (fs::path(args.data).filename() == "dataset.json" || args.data.ends_with(".json")) {
    DatasetPaths paths = load_dataset(args.data);
    int64_t frames = 0, absent = 0;
    for (const LabeledStream& s : paths.streams) {
      frames += static_cast<int64_t>(s.frames.size());
      for (const FrameRecord& f : s.frames) absent += !f.slots[0] + !f.slots[1];
    }
    std::cout << "ok: " << paths.streams.size() << " streams, " << frames << " frames, "
              << "absent-slot rate "
              << (frames ? static_cast<double>(absent) / (2.0 * frames) : 0.0) << "\n";
    return kExitOk;
  }
  std::ifstream in(args.data);
  if (!in) raise(Err::IoError, "cannot read " + args.data);
  ValidateStats stats;
  std::vector<FrameRecord> frames = parse_skeleton_file(in, &stats);
  int64_t labeled = 0;
  for (const FrameRecord& f : frames) labeled += f.label.has_value();
  std::cout << "ok: " << frames.size() << " frames, " << labeled << " labeled, "
            << stats.out_of_range_coords << " out-of-range coordinates\n";
  return kExitOk;
}

int cmd_train(const Args& args) {
  RunConfig cfg = load_run_config(args.config);
  if (args.seed_given) {
    cfg.seed = args.seed;
    cfg.train.seed = args.seed;
  }
  if (args.fps > 0) cfg.settings.fps = args.fps;
  if (args.window > 0) {
    cfg.settings.window = args.window;
    cfg.model.window = args.window;
    validate_spec(cfg.model);
  }
  const std::string data_path = args.data.empty() ? cfg.data : args.data;
  if (data_path.empty()) raise(Err::ConfigError, "no dataset given (config 'data' or --data)");
  DatasetPaths paths = load_dataset(data_path);
  std::vector<LabeledStream>& streams = paths.streams;
  cfg.settings.source_fps = paths.fps;
  CompiledDataset data = compile_dataset(streams, cfg.settings);
  std::cout << "train windows: " << data.train.size() << ", val: " << data.val.size()
            << ", holdout: " << data.holdout.size() << "\n";
  CompiledBatchSource train_src(&data, &data.train);
  CompiledBatchSource val_src(&data, &data.val);
  TrainResult result = train(cfg.model, manifest_for(cfg.settings), train_src, &val_src, cfg.train);
  save_model(result.model, args.out);
  const std::string history_path = args.out + ".history.csv";
  write_history_csv(history_path, result.history);
  if (!result.history.empty())
    std::cout << "final val accuracy " << result.history.back().val_accuracy << "\n";
  std::cout << "model: " << args.out << " (" << result.model.param_count() << " parameters)\n"
            << "history: " << history_path << "\n";
  return kExitOk;
}

int cmd_search(const Args& args) {
  ParamSpace space = args.space.empty() ? default_space() : load_space(args.space);
  DatasetPaths paths = load_dataset(args.data);
  std::vector<LabeledStream>& streams = paths.streams;
  SearchConfig cfg;
  cfg.budget = args.budget;
  cfg.strategy = args.strategy == "random" ? Strategy::Random : Strategy::SurrogateGuided;
  cfg.top_quantile = args.quantile;
  cfg.seed = args.seed;
  cfg.stages = args.stages;
  cfg.jobs = args.jobs;
  if (args.max_history > 0) cfg.constraints.max_history_s = args.max_history;
  cfg.constraints.generalization_only = args.generalization_only;

  fs::create_directories(args.out);
  std::ofstream log(fs::path(args.out) / "runlog.jsonl");
  const int source_fps = paths.fps;
  TrialRunner runner = [&](const TrialConfig& trial, uint64_t seed) {
    return run_data_trial(trial, streams, source_fps, seed);
  };
  SearchResult result = search(space, cfg, runner, &log);

  const TrialRecord& best = result.best();
  RunConfig best_cfg = run_config_from_trial(best.config, best.seed);
  best_cfg.data = args.data;
  save_run_config(best_cfg, (fs::path(args.out) / "best_config.json").string());
  save_space(result.stage_spaces.back(), (fs::path(args.out) / "final_space.json").string());
  std::cout << "best trial #" << best.index << ": val accuracy " << best.val_accuracy << " ("
            << best.param_count << " parameters)\n"
            << "log: " << (fs::path(args.out) / "runlog.jsonl").string() << "\n"
            << "best config: " << (fs::path(args.out) / "best_config.json").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Args& args) {
  Model model = load_model(args.model);
  DatasetPaths paths = load_dataset(args.data);
  std::vector<LabeledStream>& streams = paths.streams;
  PipelineSettings settings;
  settings.source_fps = paths.fps;
  settings.fps = model.manifest.fps;
  settings.window = model.manifest.window_len;
  settings.preprocess = model.manifest.preprocess;
  settings.eval_hop = 1;
  CompiledDataset data = compile_dataset(streams, settings);
  EvalOptions opts;
  opts.anchor_class = args.anchor_class;
  opts.margin_frames = args.margin;
  opts.smooth_k = args.smooth_k;
  EvalOutputs outputs = write_eval_reports(args.out, model, data, paths, opts);
  std::cout << "val accuracy " << outputs.val_accuracy << ", holdout accuracy "
            << outputs.holdout_accuracy << "\n";
  if (outputs.cycle_compared)
    std::cout << "cycle mean relative error " << outputs.cycle_mean_error << "\n";
  std::cout << "reports in " << args.out << "\n";
  return kExitOk;
}

int cmd_predict(const Args& args) {
  Model model = load_model(args.model);
  std::ifstream in(args.data);
  if (!in) raise(Err::IoError, "cannot read " + args.data);
  std::ofstream out(args.out);
  if (!out) raise(Err::IoError, "cannot write " + args.out);

  const int W = model.manifest.window_len;
  const int d = 30 / model.manifest.fps;  // decimation per the manifest
  const PreprocessConfig& pp = model.manifest.preprocess;

  out << "video_id,frame_index,status,predicted_class,p_max\n";
  // rolling window over the downsampled stream, preprocessed per manifest
  std::vector<FrameRecord> rows;
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != skeleton_csv_header())
    raise(Err::MalformedRow, "line 1: header does not match the frame-record schema");
  size_t line_no = 1;
  int last_class = -1;
  float last_p = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream one(skeleton_csv_header() + "\n" + line + "\n");
    std::vector<FrameRecord> parsed = parse_skeleton_file(one);
    if (parsed.empty()) continue;
    FrameRecord rec = std::move(parsed[0]);
    const bool sampled = rec.frame_index % d == 0;
    if (sampled) {
      rec.label = MotionClass(0);  // placeholder; windows need a label slot
      rows.push_back(std::move(rec));
      if (static_cast<int>(rows.size()) > W) rows.erase(rows.begin());
    }
    const FrameRecord& cur = sampled ? rows.back() : rec;
    if (static_cast<int>(rows.size()) < W) {
      out << cur.video_id << ',' << cur.frame_index << ",insufficient_history,,\n";
      continue;
    }
    if (sampled) {
      std::vector<InstanceWindow> windows = build_windows(rows, W, 1, model.manifest.fps);
      preprocess(windows[0], pp);
      Prediction p = predict(model, windows[0].features.data(),
                             static_cast<int>(windows[0].features.size()));
      last_class = p.cls.id();
      last_p = *std::max_element(p.probs.begin(), p.probs.end());
      out << cur.video_id << ',' << cur.frame_index << ",ok," << last_class << ','
          << fmt_float(last_p) << '\n';
    } else {
      // between sampled frames the current motion estimate persists
      out << cur.video_id << ',' << cur.frame_index << ",held," << last_class << ','
          << fmt_float(last_p) << '\n';
    }
  }
  std::cout << "wrote " << args.out << "\n";
  return kExitOk;
}

int cmd_report(const Args& args) {
  std::ifstream in(args.log);
  if (!in) raise(Err::IoError, "cannot read run log " + args.log);
  fs::create_directories(args.out);
  std::vector<TrialRecord> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      trials.push_back(trial_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      raise(Err::MalformedRow, "bad run-log line: " + std::string(e.what()));
    }
  }
  std::ofstream csv(fs::path(args.out) / "trials.csv");
  csv << "index,status,val_accuracy,val_loss,param_count,wall_time_s,family\n";
  std::vector<double> accuracy_by_trial;
  const TrialRecord* best = nullptr;
  for (const TrialRecord& t : trials) {
    std::string family;
    const auto it = t.config.find("family");
    if (it != t.config.end()) family = param_value_str(it->second);
    csv << t.index << ',' << (t.ok ? "ok" : "failed") << ',' << fmt_double(t.val_accuracy) << ','
        << fmt_double(t.val_loss) << ',' << t.param_count << ',' << fmt_double(t.wall_time_s)
        << ',' << family << '\n';
    accuracy_by_trial.push_back(t.ok ? t.val_accuracy : 0.0);
    if (t.ok && (!best || t.val_accuracy > best->val_accuracy)) best = &t;
  }
  std::vector<std::string> labels(accuracy_by_trial.size());
  for (size_t i = 0; i < labels.size(); ++i)
    labels[i] = labels.size() > 40 && i % 5 != 0 ? "" : std::to_string(i);
  write_bar_chart_svg((fs::path(args.out) / "val_accuracy_over_trials.svg").string(),
                      "Validation accuracy per trial", labels, accuracy_by_trial);
  if (best) {
    std::ofstream best_out(fs::path(args.out) / "best_trial.json");
    best_out << trial_to_json(*best).dump(2) << '\n';
  }
  std::cout << "summarized " << trials.size() << " trials into " << args.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeleton-based motion classification pipeline for manual processes"};
  app.require_subcommand(1);
  Args args;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("--out", args.out, "Output directory")->required();
  synth->add_option("--seed", args.seed, "Generator seed");
  synth->add_option("--workers", args.workers, "Number of workers");
  synth->add_option("--repeats", args.repeats, "Process repetitions per worker");
  synth->add_option("--dropout", args.dropout, "Per-slot detection dropout probability");
  synth->add_option("--error-prob", args.error_prob, "Error-class burst probability");

  CLI::App* check = app.add_subcommand("check", "Validate a frame CSV or dataset index");
  check->add_option("--data", args.data, "Frame CSV or dataset.json")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model from a run config");
  train_cmd->add_option("--config", args.config, "Run configuration file")->required();
  train_cmd->add_option("--data", args.data, "Dataset index (overrides the config)");
  train_cmd->add_option("--out", args.out, "Model container path")->required();
  train_cmd->add_option("--seed", args.seed, "Override the config seed")
      ->each([&args](const std::string&) { args.seed_given = true; });
  train_cmd->add_option("--fps", args.fps, "Override the emulated frame rate");
  train_cmd->add_option("--window", args.window, "Override the window length");

  CLI::App* search_cmd = app.add_subcommand("search", "Hyperparameter search");
  search_cmd->add_option("--data", args.data, "Dataset index")->required();
  search_cmd->add_option("--out", args.out, "Output directory")->required();
  search_cmd->add_option("--space", args.space, "Space definition file (default: full space)");
  search_cmd->add_option("--budget", args.budget, "Number of trials");
  search_cmd->add_option("--seed", args.seed, "Search seed");
  search_cmd->add_option("--jobs", args.jobs, "Concurrent trials");
  search_cmd->add_option("--stages", args.stages, "Staged schedule count");
  search_cmd->add_option("--quantile", args.quantile, "Top quantile for shrink/freeze");
  search_cmd->add_option("--strategy", args.strategy, "random or surrogate");
  search_cmd->add_flag("--generalization-only", args.generalization_only,
                       "Restrict to per-skeleton normalization");
  search_cmd->add_option("--max-history", args.max_history, "History budget in seconds");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model and write the report bundle");
  eval_cmd->add_option("--model", args.model, "Model container")->required();
  eval_cmd->add_option("--data", args.data, "Dataset index")->required();
  eval_cmd->add_option("--out", args.out, "Report directory")->required();
  eval_cmd->add_option("--anchor-class", args.anchor_class, "Cycle anchor class");
  eval_cmd->add_option("--margin", args.margin, "Transition margin in frames");
  eval_cmd->add_option("--smooth", args.smooth_k, "Smoothing window (odd)");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Per-frame predictions for a stream");
  predict_cmd->add_option("--model", args.model, "Model container")->required();
  predict_cmd->add_option("--data", args.data, "Frame CSV")->required();
  predict_cmd->add_option("--out", args.out, "Output CSV")->required();

  CLI::App* report_cmd = app.add_subcommand("report", "Summarize a search run log");
  report_cmd->add_option("--log", args.log, "runlog.jsonl from a search")->required();
  report_cmd->add_option("--out", args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(args);
    if (check->parsed()) return cmd_check(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (search_cmd->parsed()) return cmd_search(args);
    if (eval_cmd->parsed()) return cmd_eval(args);
    if (predict_cmd->parsed()) return cmd_predict(args);
    if (report_cmd->parsed()) return cmd_report(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case Err::ConfigError:
      case Err::MalformedRow:
      case Err::MixedMissingness:
      case Err::LabelOutOfRange:
      case Err::ScoreOutOfRange:
      case Err::NonMonotonicFrameIndex:
      case Err::InvalidSpec:
        return kExitUsage;
      default:
        return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

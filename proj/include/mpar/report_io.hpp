#pragma once

#include <string>
#include <vector>

#include "mpar/pipeline.hpp"

namespace mpar {

void write_class_report_csv(const std::string& path, const ClassReport& report);
void write_worker_accuracy_csv(const std::string& path,
                               const std::map<std::string, double>& accuracy);
void write_temporal_profile_csv(const std::string& path, const TemporalProfile& profile);
void write_transition_csv(const std::string& path, const TransitionStats& stats, int margin);
void write_cycle_times_csv(const std::string& path, const std::vector<double>& times);
void write_history_csv(const std::string& path, const TrainHistory& history);

// Minimal standalone SVG bar chart; values in [0,1] unless y_max says otherwise.
void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values, double y_max = 1.0);

struct EvalOptions {
  int anchor_class = 1;
  int margin_frames = 15;  // 0.5 s at 30 fps
  int smooth_k = 31;
  bool charts = true;
};

struct EvalOutputs {
  double val_accuracy = 0;
  double holdout_accuracy = 0;
  TransitionStats val_transition;
  TransitionStats holdout_transition;
  std::vector<double> holdout_cycle_times_s;
  double cycle_mean_error = 0;  // |mean predicted - mean truth| / mean truth
  bool cycle_compared = false;
};

// The full evaluation bundle: one CSV per table, a structured summary, and
// optional charts, computed on the validation and holdout scopes.
EvalOutputs write_eval_reports(const std::string& dir, const Model& model,
                               const CompiledDataset& data, const DatasetPaths& paths,
                               const EvalOptions& opts);

}  // namespace mpar

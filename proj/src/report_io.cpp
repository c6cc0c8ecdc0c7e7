#include "mpar/report_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mpar/csv.hpp"

namespace mpar {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(Err::IoError, "cannot write " + path);
  return out;
}

}  // namespace

void write_class_report_csv(const std::string& path, const ClassReport& report) {
  std::ofstream out = open_out(path);
  out << "class,precision,recall,f1,support,degenerate\n";
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassMetrics& m = report.per_class[c];
    out << c << ',' << fmt_double(m.precision) << ',' << fmt_double(m.recall) << ','
        << fmt_double(m.f1) << ',' << m.support << ',' << (m.degenerate ? 1 : 0) << '\n';
  }
  out << "micro_accuracy," << fmt_double(report.micro_accuracy) << ",,,,\n";
}

void write_worker_accuracy_csv(const std::string& path,
                               const std::map<std::string, double>& accuracy) {
  std::ofstream out = open_out(path);
  out << "worker_id,accuracy\n";
  for (const auto& [worker, acc] : accuracy) out << worker << ',' << fmt_double(acc) << '\n';
}

void write_temporal_profile_csv(const std::string& path, const TemporalProfile& profile) {
  std::ofstream out = open_out(path);
  out << "class,bin,frames,correct,accuracy\n";
  for (int c = 0; c < kNumClasses; ++c)
    for (int b = 0; b < profile.n_bins; ++b) {
      if (profile.total[c][b] == 0) continue;
      out << c << ',' << b << ',' << profile.total[c][b] << ',' << profile.correct[c][b] << ','
          << fmt_double(profile.accuracy(c, b)) << '\n';
    }
}

void write_transition_csv(const std::string& path, const TransitionStats& stats, int margin) {
  std::ofstream out = open_out(path);
  out << "margin_frames,errors,share_near_transition,adjacent_confusion_rate\n";
  out << margin << ',' << stats.error_count << ',' << fmt_double(stats.share_near_transition)
      << ',' << fmt_double(stats.adjacent_confusion_rate) << '\n';
}

void write_cycle_times_csv(const std::string& path, const std::vector<double>& times) {
  std::ofstream out = open_out(path);
  out << "cycle_index,duration_s\n";
  for (size_t i = 0; i < times.size(); ++i) out << i << ',' << fmt_double(times[i]) << '\n';
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream out = open_out(path);
  out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,learning_rate\n";
  for (size_t e = 0; e < history.size(); ++e) {
    const EpochStats& s = history[e];
    out << e + 1 << ',' << fmt_double(s.train_loss) << ',' << fmt_double(s.train_accuracy) << ','
        << fmt_double(s.val_loss) << ',' << fmt_double(s.val_accuracy) << ','
        << fmt_double(s.learning_rate) << '\n';
  }
}

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values, double y_max) {
  if (labels.size() != values.size()) raise(Err::LengthMismatch, "labels/values size mismatch");
  const int bar_w = 34, gap = 10, height = 220, base = 180, left = 40;
  const int width = left + static_cast<int>(labels.size()) * (bar_w + gap) + 20;
  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  out << "<text x=\"" << left << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">"
      << title << "</text>\n";
  out << "<line x1=\"" << left - 6 << "\" y1=\"" << base << "\" x2=\"" << width - 10 << "\" y2=\""
      << base << "\" stroke=\"#555\"/>\n";
  for (size_t i = 0; i < values.size(); ++i) {
    const double frac = y_max > 0 ? std::clamp(values[i] / y_max, 0.0, 1.0) : 0.0;
    const int h = static_cast<int>(frac * 140);
    const int x = left + static_cast<int>(i) * (bar_w + gap);
    out << "<rect x=\"" << x << "\" y=\"" << base - h << "\" width=\"" << bar_w << "\" height=\""
        << h << "\" fill=\"#4878a8\"/>\n";
    out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << base + 14
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << labels[i]
        << "</text>\n";
    char value_buf[32];
    std::snprintf(value_buf, sizeof(value_buf), "%.3g", values[i]);
    out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << base - h - 4
        << "\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">" << value_buf
        << "</text>\n";
  }
  out << "</svg>\n";
}

namespace {

// Ground-truth cycle durations per worker from the generator's sheet.
std::map<std::string, std::vector<double>> read_cycle_sheet(const std::string& path) {
  std::map<std::string, std::vector<double>> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv(line);
    if (f.size() != 6) continue;
    out[f[0]].push_back(*parse_double_field(f[5]));
  }
  return out;
}

}  // namespace

EvalOutputs write_eval_reports(const std::string& dir, const Model& model,
                               const CompiledDataset& data, const DatasetPaths& paths,
                               const EvalOptions& opts) {
  fs::create_directories(dir);
  EvalOutputs outputs;

  ScopeEval val = evaluate_scope(model, data, data.val);
  ScopeEval holdout = evaluate_scope(model, data, data.holdout);

  ClassReport val_report;
  if (!val.preds.empty()) {
    val_report = class_report(confusion_matrix(val.preds, val.labels));
    outputs.val_accuracy = val_report.micro_accuracy;
    write_class_report_csv((fs::path(dir) / "class_report_val.csv").string(), val_report);
    outputs.val_transition = transition_error_share(val.preds, val.labels, opts.margin_frames);
    write_transition_csv((fs::path(dir) / "transition_val.csv").string(), outputs.val_transition,
                         opts.margin_frames);
  }

  std::map<std::string, double> worker_acc;
  if (!val.preds.empty()) worker_acc = grouped_accuracy(val.preds, val.labels, val.workers);
  ClassReport holdout_report;
  if (!holdout.preds.empty()) {
    holdout_report = class_report(confusion_matrix(holdout.preds, holdout.labels));
    outputs.holdout_accuracy = holdout_report.micro_accuracy;
    write_class_report_csv((fs::path(dir) / "class_report_holdout.csv").string(), holdout_report);
    outputs.holdout_transition =
        transition_error_share(holdout.preds, holdout.labels, opts.margin_frames);
    write_transition_csv((fs::path(dir) / "transition_holdout.csv").string(),
                         outputs.holdout_transition, opts.margin_frames);
    write_temporal_profile_csv((fs::path(dir) / "temporal_profile_holdout.csv").string(),
                               temporal_profile(holdout.preds, holdout.labels));
    for (const auto& [worker, acc] :
         grouped_accuracy(holdout.preds, holdout.labels, holdout.workers))
      worker_acc[worker + " (holdout)"] = acc;
  }
  if (!val.preds.empty())
    write_temporal_profile_csv((fs::path(dir) / "temporal_profile_val.csv").string(),
                               temporal_profile(val.preds, val.labels));
  write_worker_accuracy_csv((fs::path(dir) / "worker_accuracy.csv").string(), worker_acc);

  // cycle KPIs on the smoothed holdout predictions
  const auto truth = paths.ground_truth_cycles.empty()
                         ? std::map<std::string, std::vector<double>>{}
                         : read_cycle_sheet(paths.ground_truth_cycles);
  double pred_mean = 0, truth_mean = 0;
  int64_t pred_n = 0, truth_n = 0;
  for (const VideoEval& video : holdout.videos) {
    std::vector<MotionClass> smoothed = smooth(video.preds, opts.smooth_k);
    std::vector<double> times =
        cycle_times(segment(smoothed), MotionClass(opts.anchor_class), data.settings.fps);
    write_cycle_times_csv(
        (fs::path(dir) / ("cycle_times_" + video.worker_id + ".csv")).string(), times);
    for (double t : times) {
      pred_mean += t;
      ++pred_n;
    }
    outputs.holdout_cycle_times_s.insert(outputs.holdout_cycle_times_s.end(), times.begin(),
                                         times.end());
    const auto it = truth.find(video.worker_id);
    if (it != truth.end())
      for (double t : it->second) {
        truth_mean += t;
        ++truth_n;
      }
  }
  if (pred_n > 0 && truth_n > 0) {
    pred_mean /= static_cast<double>(pred_n);
    truth_mean /= static_cast<double>(truth_n);
    outputs.cycle_mean_error = std::abs(pred_mean - truth_mean) / truth_mean;
    outputs.cycle_compared = true;
  }

  nlohmann::json summary;
  summary["val_accuracy"] = outputs.val_accuracy;
  summary["holdout_accuracy"] = outputs.holdout_accuracy;
  summary["transition_margin_frames"] = opts.margin_frames;
  summary["val_share_near_transition"] = outputs.val_transition.share_near_transition;
  summary["holdout_share_near_transition"] = outputs.holdout_transition.share_near_transition;
  summary["holdout_adjacent_confusion_rate"] = outputs.holdout_transition.adjacent_confusion_rate;
  summary["smooth_k"] = opts.smooth_k;
  summary["anchor_class"] = opts.anchor_class;
  if (outputs.cycle_compared) summary["cycle_mean_relative_error"] = outputs.cycle_mean_error;
  std::ofstream summary_out = open_out((fs::path(dir) / "summary.json").string());
  summary_out << summary.dump(2) << '\n';

  if (opts.charts) {
    std::vector<std::string> class_labels;
    std::vector<double> f1;
    for (int c = 0; c < kNumClasses; ++c) {
      class_labels.push_back(std::to_string(c));
      f1.push_back(val.preds.empty() ? holdout_report.per_class[c].f1 : val_report.per_class[c].f1);
    }
    write_bar_chart_svg((fs::path(dir) / "class_f1.svg").string(), "Per-class F1", class_labels,
                        f1);
    std::vector<std::string> worker_labels;
    std::vector<double> worker_values;
    for (const auto& [worker, acc] : worker_acc) {
      worker_labels.push_back(worker);
      worker_values.push_back(acc);
    }
    write_bar_chart_svg((fs::path(dir) / "worker_accuracy.svg").string(), "Per-worker accuracy",
                        worker_labels, worker_values);
  }
  return outputs;
}

}  // namespace mpar

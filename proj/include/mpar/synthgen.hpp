#pragma once

#include <array>
#include <string>
#include <vector>

#include "mpar/ingest.hpp"
#include "mpar/metrics.hpp"

namespace mpar {

// Per-class motion prototype: each class works a distinct table region with
// its own rhythm, depth profile, and finger articulation.
struct ClassMotion {
  double center_x = 0.5;
  double center_y = 0.5;
  double freq_hz = 0.5;        // palm oscillation
  double amp_x = 0.07;
  double amp_y = 0.05;
  double depth_base = 0.0;
  double depth_amp = 0.03;
  double articulation_hz = 1.0;
  double articulation_depth = 0.4;  // 0..1 finger curl modulation
  double duration_mean_s = 2.5;
  double duration_jitter_s = 0.25;
};

struct WorkerStyle {
  double speed = 1.0;       // divides segment durations, scales oscillators
  double amplitude = 1.0;
  double noise_sigma = 0.008;
  double offset_x = 0.0;    // small habitual workspace shift
  double offset_y = 0.0;
  bool reroll_per_segment = false;  // the sloppy preset
};

struct SynthSpec {
  int n_workers = 9;
  int fps = 30;
  int repeats = 5;  // grammar iterations of classes 1..9
  std::array<ClassMotion, kNumClasses> classes;
  double error_burst_prob = 0.03;   // chance of a class-0 burst after a segment
  double error_burst_mean_s = 0.8;
  double dropout_prob = 0.05;       // per slot per frame
  double slot_shuffle_prob = 0.5;   // raw slot order is "as detected"
  double hand_mislabel_prob = 0.02; // wrong handedness label with a low score
  int sloppy_worker = 4;
  int holdout_worker = 9;
};

SynthSpec default_synth_spec();

struct GeneratedWorker {
  std::string worker_id;
  std::string video_id;
  std::vector<FrameRecord> frames;  // labeled
  LabelTable labels;
  std::vector<Segment> true_segments;
  std::vector<int64_t> cycle_start_frames;  // starts of anchor-class segments
  std::vector<double> true_cycle_times_s;
};

struct SynthResult {
  SynthSpec spec;
  std::vector<GeneratedWorker> workers;
};

SynthResult generate(const SynthSpec& spec, uint64_t seed);

struct SynthStats {
  std::array<double, kNumClasses> mean_duration_s{};
  double cycle_duration_s = 0;  // sum of per-class means per grammar iteration
  double dropout_rate = 0;
  double frames_per_worker_estimate = 0;
};

SynthStats describe(const SynthSpec& spec);

// Emits the ingest CSV formats plus ground-truth sheets and a dataset index.
void write_synth_dataset(const SynthResult& result, const std::string& dir);

}  // namespace mpar

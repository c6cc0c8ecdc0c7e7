#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpar/skeleton.hpp"

namespace mpar {

// Label transitions: (start_frame, class); the class holds from start_frame
// until the next entry's start_frame.
struct LabelTable {
  std::vector<std::pair<int64_t, MotionClass>> entries;
};

std::vector<FrameRecord> parse_skeleton_file(std::istream& in, ValidateStats* stats = nullptr);
void write_skeleton_file(std::ostream& out, const std::vector<FrameRecord>& frames);
std::string skeleton_csv_header();

LabelTable parse_label_table(std::istream& in);
void write_label_table(std::ostream& out, const LabelTable& table);

// Frame f receives the class of the greatest start_frame <= f.
void apply_labels(std::vector<FrameRecord>& frames, const LabelTable& table);

// Exact decimation: keeps frames whose index is divisible by source/target.
std::vector<FrameRecord> emulate_fps(const std::vector<FrameRecord>& stream, int source_fps,
                                     int target_fps);

// First floor(N * ratio) frames of one video form the train pool.
int64_t split_boundary(size_t n_frames, double ratio);

struct SplitFrames {
  std::vector<FrameRecord> train;
  std::vector<FrameRecord> val;
};
SplitFrames split_train_val(const std::vector<FrameRecord>& video, double ratio);

// Per-row, per-slot detection metadata carried alongside window features so
// preprocessing can swap hands and track imputation.
struct SlotMeta {
  bool present = false;
  Handedness handedness = Handedness::Left;
  float handedness_score = 0.0f;
  float detection_score = 0.0f;
};

// W consecutive post-downsampling feature rows of one video, labeled by the
// most recent frame; the unit of training and inference.
struct InstanceWindow {
  int rows = 0;
  int feature_len = 0;
  std::vector<float> features;   // rows * feature_len, row-major
  std::vector<SlotMeta> meta;    // rows * 2
  std::vector<uint8_t> imputed;  // rows * 2, set by the impute stage
  ReduceMode layout = ReduceMode::Full;
  MotionClass label;
  int64_t end_frame = 0;
  std::string video_id;
  std::string worker_id;

  float* row(int r) { return features.data() + static_cast<size_t>(r) * feature_len; }
  const float* row(int r) const { return features.data() + static_cast<size_t>(r) * feature_len; }
  SlotMeta& meta_at(int r, int slot) { return meta[static_cast<size_t>(r) * kSlots + slot]; }
  const SlotMeta& meta_at(int r, int slot) const {
    return meta[static_cast<size_t>(r) * kSlots + slot];
  }
  bool imputed_at(int r, int slot) const { return imputed[static_cast<size_t>(r) * kSlots + slot] != 0; }
  void set_imputed(int r, int slot, bool v) {
    imputed[static_cast<size_t>(r) * kSlots + slot] = v ? 1 : 0;
  }
};

std::vector<InstanceWindow> build_windows(const std::vector<FrameRecord>& stream, int window_len,
                                          int hop, int fps,
                                          std::optional<double> max_history_s = std::nullopt);

}  // namespace mpar

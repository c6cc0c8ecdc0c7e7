#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpar/metrics.hpp"
#include "mpar/preprocess.hpp"
#include "mpar/train.hpp"

namespace mpar {

struct PipelineSettings {
  int source_fps = 30;
  int fps = 30;  // emulated rate, must divide source_fps
  int window = 60;
  int train_hop = 1;
  int eval_hop = 1;
  double split_ratio = 0.8;
  std::optional<double> max_history_s;
  PreprocessConfig preprocess;
};

struct LabeledStream {
  std::string video_id;
  std::string worker_id;
  bool holdout = false;
  std::vector<FrameRecord> frames;
};

struct DatasetPaths {
  std::vector<LabeledStream> streams;
  int fps = 30;
  std::string ground_truth_segments;  // empty when absent
  std::string ground_truth_cycles;
};

// Reads a dataset index (dataset.json) and every stream it references;
// label tables are applied on top of any embedded labels.
DatasetPaths load_dataset(const std::string& index_path);

// One video after fps emulation and the per-frame preprocessing stages
// (swap, impute, reduce, and per-skeleton normalization when configured).
// Window-dependent normalization is applied at gather time.
struct PreparedVideo {
  std::string video_id;
  std::string worker_id;
  bool holdout = false;
  int n = 0;
  int f = 0;
  std::vector<float> feat;      // n * f
  std::vector<uint8_t> usable;  // n * 2: slot genuinely observed
  std::vector<int> labels;      // n
  std::vector<int64_t> frame_index;
  int64_t boundary = 0;  // first validation position

  const float* row(int r) const { return feat.data() + static_cast<size_t>(r) * f; }
};

struct WindowRef {
  int video = 0;
  int end = 0;  // inclusive end position in the prepared video
};

struct CompiledDataset {
  PipelineSettings settings;
  std::vector<PreparedVideo> videos;
  std::vector<WindowRef> train, val, holdout;

  int feature_len() const { return videos.empty() ? 0 : videos[0].f; }
  int window_cols() const { return settings.window * feature_len(); }
};

CompiledDataset compile_dataset(const std::vector<LabeledStream>& streams,
                                const PipelineSettings& settings);

// Materializes windows into a dense batch, applying on-most-recent
// normalization per window when the settings ask for it.
void gather_windows(const CompiledDataset& data, const WindowRef* refs, int count, float* out,
                    int* labels);

class CompiledBatchSource final : public BatchSource {
 public:
  CompiledBatchSource(const CompiledDataset* data, const std::vector<WindowRef>* refs)
      : data_(data), refs_(refs) {}
  int64_t size() const override { return static_cast<int64_t>(refs_->size()); }
  int feature_cols() const override { return data_->window_cols(); }
  void gather(const int64_t* idx, int count, float* out, int* labels) const override;

 private:
  const CompiledDataset* data_;
  const std::vector<WindowRef>* refs_;
};

// Spec-contract materialization of one window (slice + full preprocessing);
// the compiled path must agree with this bit for bit.
InstanceWindow reference_window(const std::vector<FrameRecord>& downsampled, int end, int window,
                                const PreprocessConfig& cfg);

// Materialized train/val/holdout instance collections. Large runs stream
// batches straight from the compiled dataset instead; this form suits small
// datasets and inspection.
struct DatasetSplit {
  std::vector<InstanceWindow> train;
  std::vector<InstanceWindow> val;
  std::vector<InstanceWindow> holdout;
  double split_ratio = 0.8;
};

DatasetSplit materialize_split(const std::vector<LabeledStream>& streams,
                               const PipelineSettings& settings);

// Per-frame predictions over one window-ref scope, grouped per video for the
// sequence analyses.
struct VideoEval {
  std::string video_id;
  std::string worker_id;
  std::vector<MotionClass> preds;
  std::vector<MotionClass> labels;
  std::vector<int64_t> frame_index;
};

struct ScopeEval {
  std::vector<MotionClass> preds;
  std::vector<MotionClass> labels;
  std::vector<std::string> workers;
  std::vector<VideoEval> videos;
};

ScopeEval evaluate_scope(const Model& model, const CompiledDataset& data,
                         const std::vector<WindowRef>& refs, int batch_size = 256);

ModelManifest manifest_for(const PipelineSettings& settings);

}  // namespace mpar

#include "mpar/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace mpar {

namespace fs = std::filesystem;

DatasetPaths load_dataset(const std::string& index_path) {
  std::ifstream in(index_path);
  if (!in) raise(Err::IoError, "cannot read dataset index " + index_path);
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    raise(Err::ConfigError, "dataset index is not valid JSON: " + std::string(e.what()));
  }
  const fs::path base = fs::path(index_path).parent_path();
  DatasetPaths out;
  try {
    out.fps = index.value("fps", 30);
    if (index.contains("ground_truth_segments"))
      out.ground_truth_segments = (base / index["ground_truth_segments"].get<std::string>()).string();
    if (index.contains("ground_truth_cycles"))
      out.ground_truth_cycles = (base / index["ground_truth_cycles"].get<std::string>()).string();
    for (const nlohmann::json& s : index.at("streams")) {
      LabeledStream stream;
      stream.video_id = s.at("video_id").get<std::string>();
      stream.worker_id = s.at("worker_id").get<std::string>();
      stream.holdout = s.value("holdout", false);
      const std::string frames_path = (base / s.at("frames").get<std::string>()).string();
      std::ifstream frames_in(frames_path);
      if (!frames_in) raise(Err::IoError, "cannot read " + frames_path);
      stream.frames = parse_skeleton_file(frames_in);
      if (s.contains("labels") && !s["labels"].get<std::string>().empty()) {
        const std::string labels_path = (base / s["labels"].get<std::string>()).string();
        std::ifstream labels_in(labels_path);
        if (!labels_in) raise(Err::IoError, "cannot read " + labels_path);
        apply_labels(stream.frames, parse_label_table(labels_in));
      }
      out.streams.push_back(std::move(stream));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(Err::ConfigError, "dataset index field error: " + std::string(e.what()));
  }
  return out;
}

namespace {

void prepare_rows(const std::vector<FrameRecord>& frames, const PreprocessConfig& cfg,
                  PreparedVideo& video) {
  const int full_len = feature_length(ReduceMode::Full);
  const int full_half = full_len / 2;
  const int out_half = points_per_hand(cfg.reduce) * kCoordsPerLandmark;
  const int points = points_per_hand(cfg.reduce);
  video.n = static_cast<int>(frames.size());
  video.f = out_half * kSlots;
  video.feat.resize(static_cast<size_t>(video.n) * video.f);
  video.usable.assign(static_cast<size_t>(video.n) * kSlots, 0);
  video.labels.resize(video.n);
  video.frame_index.resize(video.n);

  std::vector<float> full(full_len);
  SlotMeta meta[kSlots];
  uint8_t imputed[kSlots];
  for (int r = 0; r < video.n; ++r) {
    const FrameRecord& rec = frames[r];
    if (!rec.label.has_value())
      raise(Err::MalformedRow,
            "frame " + std::to_string(rec.frame_index) + " has no label; apply_labels first");
    video.labels[r] = rec.label->id();
    video.frame_index[r] = rec.frame_index;

    FeatureVector fv = flatten(rec, ReduceMode::Full);
    std::copy(fv.values.begin(), fv.values.end(), full.begin());
    for (int s = 0; s < kSlots; ++s) {
      meta[s] = SlotMeta{};
      imputed[s] = 0;
      if (rec.slots[s].has_value()) {
        meta[s].present = true;
        meta[s].handedness = rec.slots[s]->handedness;
        meta[s].handedness_score = rec.slots[s]->handedness_score;
        meta[s].detection_score = rec.slots[s]->detection_score;
      }
    }
    if (cfg.swap_enabled) detail::swap_row(full.data(), full_half, meta, imputed);
    float* out = video.feat.data() + static_cast<size_t>(r) * video.f;
    for (int s = 0; s < kSlots; ++s) {
      if (meta[s].present) {
        reduce_slot(full.data() + s * full_half, cfg.reduce, out + s * out_half);
        video.usable[static_cast<size_t>(r) * kSlots + s] = 1;
        if (cfg.normalize == NormalizeMode::PerSkeleton)
          detail::normalize_skeleton(out + s * out_half, points, cfg.epsilon);
      } else {
        std::fill(out + s * out_half, out + (s + 1) * out_half, cfg.impute_constant);
      }
    }
  }
}

}  // namespace

CompiledDataset compile_dataset(const std::vector<LabeledStream>& streams,
                                const PipelineSettings& settings) {
  if (settings.window < 1) raise(Err::InvalidSpec, "window must be >= 1");
  if (settings.train_hop < 1 || settings.eval_hop < 1) raise(Err::InvalidSpec, "hop must be >= 1");
  if (settings.max_history_s.has_value()) {
    const double history = static_cast<double>(settings.window) / settings.fps;
    if (history > *settings.max_history_s)
      raise(Err::HistoryBudgetExceeded,
            std::to_string(history) + " s of history exceeds budget " +
                std::to_string(*settings.max_history_s) + " s");
  }

  CompiledDataset data;
  data.settings = settings;
  const int W = settings.window;
  for (const LabeledStream& stream : streams) {
    if (stream.frames.empty()) raise(Err::EmptyVideo, "video " + stream.video_id + " is empty");
    std::vector<FrameRecord> downsampled =
        emulate_fps(stream.frames, settings.source_fps, settings.fps);
    PreparedVideo video;
    video.video_id = stream.video_id;
    video.worker_id = stream.worker_id;
    video.holdout = stream.holdout;
    prepare_rows(downsampled, settings.preprocess, video);
    if (video.n < W)
      raise(Err::StreamTooShort, "video " + stream.video_id + " has " + std::to_string(video.n) +
                                     " frames after downsampling, window needs " +
                                     std::to_string(W));
    const int vi = static_cast<int>(data.videos.size());
    if (stream.holdout) {
      video.boundary = video.n;
      for (int end = W - 1; end < video.n; end += settings.eval_hop)
        data.holdout.push_back(WindowRef{vi, end});
    } else {
      video.boundary = split_boundary(video.n, settings.split_ratio);
      for (int end = W - 1; end < video.boundary; end += settings.train_hop)
        data.train.push_back(WindowRef{vi, end});
      for (int end = std::max<int64_t>(W - 1, video.boundary); end < video.n;
           end += settings.eval_hop)
        data.val.push_back(WindowRef{vi, end});
    }
    data.videos.push_back(std::move(video));
  }
  return data;
}

void gather_windows(const CompiledDataset& data, const WindowRef* refs, int count, float* out,
                    int* labels) {
  const int W = data.settings.window;
  const int f = data.feature_len();
  const int half = f / 2;
  const int points = half / kCoordsPerLandmark;
  const bool on_most_recent = data.settings.preprocess.normalize == NormalizeMode::OnMostRecent;
  const float eps = data.settings.preprocess.epsilon;

  for (int i = 0; i < count; ++i) {
    const WindowRef& ref = refs[i];
    const PreparedVideo& video = data.videos[ref.video];
    const int start = ref.end - W + 1;
    float* dst = out + static_cast<int64_t>(i) * W * f;
    std::copy(video.row(start), video.row(start) + static_cast<int64_t>(W) * f, dst);
    labels[i] = video.labels[ref.end];
    if (!on_most_recent) continue;

    for (int s = 0; s < kSlots; ++s) {
      int ref_row = -1;
      for (int r = W - 1; r >= 0; --r)
        if (video.usable[static_cast<size_t>(start + r) * kSlots + s]) {
          ref_row = r;
          break;
        }
      if (ref_row < 0) continue;  // slot absent everywhere; imputed constant stays
      double centroid[3];
      double extent;
      detail::skeleton_frame_stats(dst + static_cast<int64_t>(ref_row) * f + s * half, points,
                                   centroid, &extent);
      const bool degenerate = extent < eps;
      const float inv = degenerate ? 0.0f : static_cast<float>(1.0 / extent);
      for (int r = 0; r < W; ++r) {
        if (!video.usable[static_cast<size_t>(start + r) * kSlots + s]) continue;
        float* vals = dst + static_cast<int64_t>(r) * f + s * half;
        if (degenerate) {
          std::fill(vals, vals + half, 0.0f);
          continue;
        }
        for (int p = 0; p < points; ++p)
          for (int d = 0; d < 3; ++d)
            vals[p * 3 + d] = (vals[p * 3 + d] - static_cast<float>(centroid[d])) * inv;
      }
    }
  }
}

void CompiledBatchSource::gather(const int64_t* idx, int count, float* out, int* labels) const {
  std::vector<WindowRef> refs(count);
  for (int i = 0; i < count; ++i) refs[i] = (*refs_)[idx[i]];
  gather_windows(*data_, refs.data(), count, out, labels);
}

InstanceWindow reference_window(const std::vector<FrameRecord>& downsampled, int end, int window,
                                const PreprocessConfig& cfg) {
  std::vector<FrameRecord> slice(downsampled.begin() + (end - window + 1),
                                 downsampled.begin() + end + 1);
  std::vector<InstanceWindow> windows = build_windows(slice, window, 1, 30);
  preprocess(windows[0], cfg);
  return windows[0];
}

DatasetSplit materialize_split(const std::vector<LabeledStream>& streams,
                               const PipelineSettings& settings) {
  DatasetSplit split;
  split.split_ratio = settings.split_ratio;
  for (const LabeledStream& stream : streams) {
    std::vector<FrameRecord> downsampled =
        emulate_fps(stream.frames, settings.source_fps, settings.fps);
    if (static_cast<int>(downsampled.size()) < settings.window)
      raise(Err::StreamTooShort, "video " + stream.video_id + " shorter than the window");
    const int64_t boundary =
        stream.holdout ? static_cast<int64_t>(downsampled.size())
                       : split_boundary(downsampled.size(), settings.split_ratio);
    auto emit = [&](int end, std::vector<InstanceWindow>& into) {
      into.push_back(reference_window(downsampled, end, settings.window, settings.preprocess));
    };
    if (stream.holdout) {
      for (int end = settings.window - 1; end < static_cast<int>(downsampled.size());
           end += settings.eval_hop)
        emit(end, split.holdout);
      continue;
    }
    for (int end = settings.window - 1; end < boundary; end += settings.train_hop)
      emit(end, split.train);
    for (int end = std::max<int64_t>(settings.window - 1, boundary);
         end < static_cast<int64_t>(downsampled.size()); end += settings.eval_hop)
      emit(end, split.val);
  }
  return split;
}

ScopeEval evaluate_scope(const Model& model, const CompiledDataset& data,
                         const std::vector<WindowRef>& refs, int batch_size) {
  CompiledBatchSource source(&data, &refs);
  std::vector<MotionClass> preds = predict_all(model, source, batch_size);
  ScopeEval eval;
  eval.preds = std::move(preds);
  eval.labels.reserve(refs.size());
  eval.workers.reserve(refs.size());
  int current_video = -1;
  for (size_t i = 0; i < refs.size(); ++i) {
    const PreparedVideo& video = data.videos[refs[i].video];
    eval.labels.push_back(MotionClass(video.labels[refs[i].end]));
    eval.workers.push_back(video.worker_id);
    if (refs[i].video != current_video) {
      current_video = refs[i].video;
      VideoEval ve;
      ve.video_id = video.video_id;
      ve.worker_id = video.worker_id;
      eval.videos.push_back(std::move(ve));
    }
    VideoEval& ve = eval.videos.back();
    ve.preds.push_back(eval.preds[i]);
    ve.labels.push_back(eval.labels[i]);
    ve.frame_index.push_back(video.frame_index[refs[i].end]);
  }
  return eval;
}

ModelManifest manifest_for(const PipelineSettings& settings) {
  ModelManifest manifest;
  manifest.preprocess = settings.preprocess;
  manifest.fps = settings.fps;
  manifest.window_len = settings.window;
  manifest.classes = kNumClasses;
  return manifest;
}

}  // namespace mpar

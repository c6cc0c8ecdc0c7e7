#include "mpar/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "mpar/csv.hpp"

namespace mpar {

namespace {

std::string build_header() {
  std::string h = "video_id,worker_id,frame_index";
  for (int s = 0; s < kSlots; ++s) {
    std::string p = "s" + std::to_string(s);
    h += "," + p + "_present," + p + "_handedness," + p + "_hand_score," + p + "_det_score";
    for (int i = 0; i < kLandmarksPerHand; ++i)
      h += "," + p + "_x" + std::to_string(i) + "," + p + "_y" + std::to_string(i) + "," + p +
           "_z" + std::to_string(i);
  }
  h += ",label";
  return h;
}

constexpr int kIdCols = 3;
constexpr int kSlotCols = 4 + kCoordsPerHand;             // present, handedness, 2 scores, 63 coords
constexpr int kTotalCols = kIdCols + kSlots * kSlotCols + 1;  // 138

[[noreturn]] void fail_line(size_t line_no, Err code, const std::string& what) {
  raise(code, "line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string skeleton_csv_header() {
  static const std::string header = build_header();
  return header;
}

std::vector<FrameRecord> parse_skeleton_file(std::istream& in, ValidateStats* stats) {
  std::string line;
  if (!std::getline(in, line)) raise(Err::MalformedRow, "empty file (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != skeleton_csv_header())
    raise(Err::MalformedRow, "line 1: header does not match the frame-record schema");

  std::vector<FrameRecord> out;
  std::map<std::string, int64_t> last_index;  // per video stream
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    std::vector<std::string> f = split_csv(line);
    if (static_cast<int>(f.size()) != kTotalCols)
      fail_line(line_no, Err::MalformedRow,
                "expected " + std::to_string(kTotalCols) + " fields, got " + std::to_string(f.size()));
    RawFrame raw;
    raw.video_id = f[0];
    raw.worker_id = f[1];
    try {
      auto idx = parse_int_field(f[2]);
      if (!idx) raise(Err::MalformedRow, "missing frame_index");
      raw.frame_index = *idx;
      for (int s = 0; s < kSlots; ++s) {
        const int base = kIdCols + s * kSlotCols;
        RawSlot& slot = raw.slots[s];
        auto present = parse_int_field(f[base]);
        if (!present || (*present != 0 && *present != 1))
          raise(Err::MalformedRow, "present flag must be 0 or 1");
        slot.present = *present == 1;
        if (!f[base + 1].empty()) slot.handedness = f[base + 1];
        if (auto v = parse_double_field(f[base + 2])) slot.handedness_score = static_cast<float>(*v);
        if (auto v = parse_double_field(f[base + 3])) slot.detection_score = static_cast<float>(*v);
        for (int c = 0; c < kCoordsPerHand; ++c)
          if (auto v = parse_double_field(f[base + 4 + c])) slot.coords[c] = static_cast<float>(*v);
      }
      if (auto v = parse_int_field(f[kTotalCols - 1])) raw.label = static_cast<int>(*v);
      out.push_back(validate_frame(raw, stats));
    } catch (const Error& e) {
      fail_line(line_no, e.code(), e.what());
    }
    auto it = last_index.find(raw.video_id);
    if (it != last_index.end() && raw.frame_index <= it->second)
      fail_line(line_no, Err::NonMonotonicFrameIndex,
                "frame " + std::to_string(raw.frame_index) + " after " + std::to_string(it->second) +
                    " in video " + raw.video_id);
    last_index[raw.video_id] = raw.frame_index;
  }
  return out;
}

void write_skeleton_file(std::ostream& out, const std::vector<FrameRecord>& frames) {
  out << skeleton_csv_header() << '\n';
  for (const FrameRecord& rec : frames) {
    out << rec.video_id << ',' << rec.worker_id << ',' << rec.frame_index;
    for (int s = 0; s < kSlots; ++s) {
      if (rec.slots[s].has_value()) {
        const HandObservation& obs = *rec.slots[s];
        out << ",1," << handedness_name(obs.handedness) << ',' << fmt_float(obs.handedness_score)
            << ',' << fmt_float(obs.detection_score);
        for (const Landmark& lm : obs.landmarks)
          out << ',' << fmt_float(lm.x) << ',' << fmt_float(lm.y) << ',' << fmt_float(lm.z);
      } else {
        out << ",0,,,";
        for (int c = 0; c < kCoordsPerHand; ++c) out << ',';
      }
    }
    out << ',';
    if (rec.label.has_value()) out << rec.label->id();
    out << '\n';
  }
}

LabelTable parse_label_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) raise(Err::MalformedRow, "empty label table");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "start_frame,class_id")
    raise(Err::MalformedRow, "label table header must be 'start_frame,class_id'");
  LabelTable table;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    std::vector<std::string> f = split_csv(line);
    if (f.size() != 2) fail_line(line_no, Err::MalformedRow, "expected 2 fields");
    try {
      auto start = parse_int_field(f[0]);
      auto cls = parse_int_field(f[1]);
      if (!start || !cls) raise(Err::MalformedRow, "empty field");
      if (*start < 0) raise(Err::MalformedRow, "negative start_frame");
      if (!table.entries.empty() && *start <= table.entries.back().first)
        raise(Err::MalformedRow, "start_frame not strictly increasing");
      table.entries.emplace_back(*start, MotionClass(static_cast<int>(*cls)));
    } catch (const Error& e) {
      fail_line(line_no, e.code(), e.what());
    }
  }
  return table;
}

void write_label_table(std::ostream& out, const LabelTable& table) {
  out << "start_frame,class_id\n";
  for (const auto& [start, cls] : table.entries) out << start << ',' << cls.id() << '\n';
}

void apply_labels(std::vector<FrameRecord>& frames, const LabelTable& table) {
  if (table.entries.empty()) raise(Err::EmptyTable, "label table has no entries");
  for (FrameRecord& rec : frames) {
    if (rec.frame_index < table.entries.front().first)
      raise(Err::UnlabeledPrefix, "frame " + std::to_string(rec.frame_index) +
                                      " precedes first labeled frame " +
                                      std::to_string(table.entries.front().first));
    // Greatest start_frame <= frame_index.
    auto it = std::upper_bound(table.entries.begin(), table.entries.end(), rec.frame_index,
                               [](int64_t v, const auto& e) { return v < e.first; });
    rec.label = std::prev(it)->second;
  }
}

std::vector<FrameRecord> emulate_fps(const std::vector<FrameRecord>& stream, int source_fps,
                                     int target_fps) {
  if (target_fps <= 0 || source_fps <= 0 || source_fps % target_fps != 0)
    raise(Err::NonDivisorRate, std::to_string(target_fps) + " fps does not divide " +
                                   std::to_string(source_fps) + " fps");
  const int64_t d = source_fps / target_fps;
  std::vector<FrameRecord> out;
  out.reserve(stream.size() / d + 1);
  for (const FrameRecord& rec : stream)
    if (rec.frame_index % d == 0) out.push_back(rec);
  return out;
}

int64_t split_boundary(size_t n_frames, double ratio) {
  if (n_frames == 0) raise(Err::EmptyVideo, "cannot split an empty video");
  if (ratio >= 1.0)
    std::cerr << "warning: split ratio " << ratio << " leaves an empty validation set\n";
  return static_cast<int64_t>(std::floor(static_cast<double>(n_frames) * ratio));
}

SplitFrames split_train_val(const std::vector<FrameRecord>& video, double ratio) {
  const int64_t boundary = split_boundary(video.size(), ratio);
  SplitFrames split;
  split.train.assign(video.begin(), video.begin() + boundary);
  split.val.assign(video.begin() + boundary, video.end());
  return split;
}

std::vector<InstanceWindow> build_windows(const std::vector<FrameRecord>& stream, int window_len,
                                          int hop, int fps, std::optional<double> max_history_s) {
  if (window_len < 1) raise(Err::InvalidSpec, "window length must be >= 1");
  if (hop < 1) raise(Err::InvalidSpec, "hop must be >= 1");
  if (max_history_s.has_value() && fps > 0) {
    const double history = static_cast<double>(window_len) / fps;
    if (history > *max_history_s)
      raise(Err::HistoryBudgetExceeded,
            std::to_string(history) + " s of history exceeds budget " +
                std::to_string(*max_history_s) + " s");
  }
  const int n = static_cast<int>(stream.size());
  if (n < window_len)
    raise(Err::StreamTooShort, "stream of " + std::to_string(n) + " frames shorter than window " +
                                   std::to_string(window_len));
  for (const FrameRecord& rec : stream)
    if (rec.video_id != stream.front().video_id)
      raise(Err::MalformedRow, "build_windows requires a single-video stream");

  const int feat_len = feature_length(ReduceMode::Full);
  std::vector<InstanceWindow> out;
  for (int end = window_len - 1; end < n; end += hop) {
    const FrameRecord& last = stream[end];
    if (!last.label.has_value())
      raise(Err::MalformedRow,
            "frame " + std::to_string(last.frame_index) + " has no label; apply_labels first");
    InstanceWindow w;
    w.rows = window_len;
    w.feature_len = feat_len;
    w.layout = ReduceMode::Full;
    w.features.resize(static_cast<size_t>(window_len) * feat_len);
    w.meta.resize(static_cast<size_t>(window_len) * kSlots);
    w.imputed.assign(static_cast<size_t>(window_len) * kSlots, 0);
    w.label = *last.label;
    w.end_frame = last.frame_index;
    w.video_id = last.video_id;
    w.worker_id = last.worker_id;
    for (int r = 0; r < window_len; ++r) {
      const FrameRecord& rec = stream[end - window_len + 1 + r];
      FeatureVector fv = flatten(rec, ReduceMode::Full);
      std::copy(fv.values.begin(), fv.values.end(), w.row(r));
      for (int s = 0; s < kSlots; ++s) {
        SlotMeta& m = w.meta_at(r, s);
        if (rec.slots[s].has_value()) {
          m.present = true;
          m.handedness = rec.slots[s]->handedness;
          m.handedness_score = rec.slots[s]->handedness_score;
          m.detection_score = rec.slots[s]->detection_score;
        }
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace mpar

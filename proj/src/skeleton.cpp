#include "mpar/skeleton.hpp"

#include <cmath>
#include <limits>

namespace mpar {

namespace {
constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

// Wrist, thumb tip, index tip, middle tip, pinky tip.
constexpr std::array<int, 5> kFivePoints = {0, 4, 8, 12, 20};
}  // namespace

const char* err_name(Err e) {
  switch (e) {
    case Err::MixedMissingness: return "MixedMissingness";
    case Err::LabelOutOfRange: return "LabelOutOfRange";
    case Err::ScoreOutOfRange: return "ScoreOutOfRange";
    case Err::MalformedRow: return "MalformedRow";
    case Err::NonMonotonicFrameIndex: return "NonMonotonicFrameIndex";
    case Err::UnlabeledPrefix: return "UnlabeledPrefix";
    case Err::EmptyTable: return "EmptyTable";
    case Err::NonDivisorRate: return "NonDivisorRate";
    case Err::EmptyVideo: return "EmptyVideo";
    case Err::StreamTooShort: return "StreamTooShort";
    case Err::HistoryBudgetExceeded: return "HistoryBudgetExceeded";
    case Err::InvalidSpec: return "InvalidSpec";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::EmptyTrainSet: return "EmptyTrainSet";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::CorruptContainer: return "CorruptContainer";
    case Err::UnsatisfiableConstraints: return "UnsatisfiableConstraints";
    case Err::NoSuccessfulTrials: return "NoSuccessfulTrials";
    case Err::TrialFailed: return "TrialFailed";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::EvenWindow: return "EvenWindow";
    case Err::ConfigError: return "ConfigError";
    case Err::IoError: return "IoError";
  }
  return "UnknownError";
}

const char* handedness_name(Handedness h) { return h == Handedness::Left ? "Left" : "Right"; }

Handedness parse_handedness(const std::string& s) {
  if (s == "Left" || s == "left" || s == "L") return Handedness::Left;
  if (s == "Right" || s == "right" || s == "R") return Handedness::Right;
  raise(Err::MalformedRow, "unknown handedness '" + s + "'");
}

int points_per_hand(ReduceMode mode) {
  switch (mode) {
    case ReduceMode::Full: return kLandmarksPerHand;
    case ReduceMode::CenterOfGravity: return 1;
    case ReduceMode::FivePoints: return 5;
  }
  return kLandmarksPerHand;
}

int feature_length(ReduceMode mode) { return kSlots * points_per_hand(mode) * kCoordsPerLandmark; }

const char* reduce_mode_name(ReduceMode mode) {
  switch (mode) {
    case ReduceMode::Full: return "full";
    case ReduceMode::CenterOfGravity: return "center_of_gravity";
    case ReduceMode::FivePoints: return "five_points";
  }
  return "full";
}

ReduceMode parse_reduce_mode(const std::string& s) {
  if (s == "full") return ReduceMode::Full;
  if (s == "center_of_gravity") return ReduceMode::CenterOfGravity;
  if (s == "five_points") return ReduceMode::FivePoints;
  raise(Err::ConfigError, "unknown reduce mode '" + s + "'");
}

namespace {

HandObservation validate_slot(const RawSlot& raw, int slot_index, ValidateStats* stats) {
  HandObservation obs;
  int missing = 0;
  for (const auto& c : raw.coords)
    if (!c.has_value() || std::isnan(*c)) ++missing;
  if (missing > 0)
    raise(Err::MixedMissingness, "slot " + std::to_string(slot_index) + " marked present but " +
                                     std::to_string(missing) + " of 63 coordinates missing");
  for (int i = 0; i < kLandmarksPerHand; ++i) {
    float x = *raw.coords[i * 3 + 0];
    float y = *raw.coords[i * 3 + 1];
    float z = *raw.coords[i * 3 + 2];
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      raise(Err::MalformedRow, "non-finite coordinate in slot " + std::to_string(slot_index));
    if (stats && (x < 0.0f || x > 1.0f || y < 0.0f || y > 1.0f)) ++stats->out_of_range_coords;
    obs.landmarks[i] = Landmark{x, y, z};
  }
  if (!raw.handedness.has_value())
    raise(Err::MixedMissingness, "present slot " + std::to_string(slot_index) + " lacks handedness");
  obs.handedness = parse_handedness(*raw.handedness);
  if (!raw.handedness_score.has_value() || !raw.detection_score.has_value())
    raise(Err::MixedMissingness, "present slot " + std::to_string(slot_index) + " lacks scores");
  obs.handedness_score = *raw.handedness_score;
  obs.detection_score = *raw.detection_score;
  for (float s : {obs.handedness_score, obs.detection_score})
    if (!(s >= 0.0f && s <= 1.0f))
      raise(Err::ScoreOutOfRange, "score " + std::to_string(s) + " outside [0,1]");
  return obs;
}

void check_absent_slot(const RawSlot& raw, int slot_index) {
  int given = 0;
  for (const auto& c : raw.coords)
    if (c.has_value() && !std::isnan(*c)) ++given;
  if (given > 0)
    raise(Err::MixedMissingness, "slot " + std::to_string(slot_index) + " marked absent but " +
                                     std::to_string(given) + " coordinates given");
}

}  // namespace

FrameRecord validate_frame(const RawFrame& raw, ValidateStats* stats) {
  if (raw.frame_index < 0)
    raise(Err::MalformedRow, "negative frame index " + std::to_string(raw.frame_index));
  FrameRecord rec;
  rec.video_id = raw.video_id;
  rec.worker_id = raw.worker_id;
  rec.frame_index = raw.frame_index;
  for (int s = 0; s < kSlots; ++s) {
    if (raw.slots[s].present) {
      rec.slots[s] = validate_slot(raw.slots[s], s, stats);
    } else {
      check_absent_slot(raw.slots[s], s);
    }
  }
  if (raw.label.has_value()) rec.label = MotionClass(*raw.label);  // throws LabelOutOfRange
  return rec;
}

RawFrame to_raw(const FrameRecord& record) {
  RawFrame raw;
  raw.video_id = record.video_id;
  raw.worker_id = record.worker_id;
  raw.frame_index = record.frame_index;
  for (int s = 0; s < kSlots; ++s) {
    if (!record.slots[s].has_value()) continue;
    const HandObservation& obs = *record.slots[s];
    RawSlot& slot = raw.slots[s];
    slot.present = true;
    slot.handedness = handedness_name(obs.handedness);
    slot.handedness_score = obs.handedness_score;
    slot.detection_score = obs.detection_score;
    for (int i = 0; i < kLandmarksPerHand; ++i) {
      slot.coords[i * 3 + 0] = obs.landmarks[i].x;
      slot.coords[i * 3 + 1] = obs.landmarks[i].y;
      slot.coords[i * 3 + 2] = obs.landmarks[i].z;
    }
  }
  if (record.label.has_value()) raw.label = record.label->id();
  return raw;
}

void reduce_slot(const float* in63, ReduceMode mode, float* out) {
  switch (mode) {
    case ReduceMode::Full:
      for (int i = 0; i < kCoordsPerHand; ++i) out[i] = in63[i];
      return;
    case ReduceMode::CenterOfGravity: {
      double sx = 0, sy = 0, sz = 0;
      for (int i = 0; i < kLandmarksPerHand; ++i) {
        sx += in63[i * 3 + 0];
        sy += in63[i * 3 + 1];
        sz += in63[i * 3 + 2];
      }
      out[0] = static_cast<float>(sx / kLandmarksPerHand);
      out[1] = static_cast<float>(sy / kLandmarksPerHand);
      out[2] = static_cast<float>(sz / kLandmarksPerHand);
      return;
    }
    case ReduceMode::FivePoints:
      for (int p = 0; p < 5; ++p)
        for (int d = 0; d < 3; ++d) out[p * 3 + d] = in63[kFivePoints[p] * 3 + d];
      return;
  }
}

FeatureVector flatten(const FrameRecord& frame, ReduceMode layout) {
  FeatureVector fv;
  fv.layout = layout;
  const int half = points_per_hand(layout) * kCoordsPerLandmark;
  fv.values.assign(static_cast<size_t>(kSlots) * half, kNaN);
  for (int s = 0; s < kSlots; ++s) {
    if (!frame.slots[s].has_value()) continue;  // NaN markers; imputation fills later
    const HandObservation& obs = *frame.slots[s];
    std::array<float, kCoordsPerHand> full;
    for (int i = 0; i < kLandmarksPerHand; ++i) {
      full[i * 3 + 0] = obs.landmarks[i].x;
      full[i * 3 + 1] = obs.landmarks[i].y;
      full[i * 3 + 2] = obs.landmarks[i].z;
    }
    reduce_slot(full.data(), layout, fv.values.data() + static_cast<size_t>(s) * half);
  }
  return fv;
}

}  // namespace mpar

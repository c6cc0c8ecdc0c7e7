#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpar/error.hpp"

namespace mpar {

inline constexpr int kLandmarksPerHand = 21;
inline constexpr int kCoordsPerLandmark = 3;
inline constexpr int kCoordsPerHand = kLandmarksPerHand * kCoordsPerLandmark;  // 63
inline constexpr int kSlots = 2;
inline constexpr int kNumClasses = 10;

// One 3-d hand landmark. x/y are image-relative (nominally [0,1]), z is a
// relative depth estimate. A missing hand is represented at the slot level,
// never by partially missing coordinates.
struct Landmark {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
};

enum class Handedness : uint8_t { Left, Right };

const char* handedness_name(Handedness h);
Handedness parse_handedness(const std::string& s);

struct HandObservation {
  std::array<Landmark, kLandmarksPerHand> landmarks{};
  Handedness handedness = Handedness::Left;
  float handedness_score = 0.0f;  // in [0,1]
  float detection_score = 0.0f;   // in [0,1]
};

// One of the ten motion classes; id 0 is the error class.
class MotionClass {
 public:
  MotionClass() = default;
  explicit MotionClass(int id) : id_(id) {
    if (id < 0 || id >= kNumClasses)
      raise(Err::LabelOutOfRange, "motion class " + std::to_string(id));
  }
  int id() const { return id_; }
  friend bool operator==(MotionClass a, MotionClass b) { return a.id_ == b.id_; }
  friend bool operator!=(MotionClass a, MotionClass b) { return a.id_ != b.id_; }
  friend bool operator<(MotionClass a, MotionClass b) { return a.id_ < b.id_; }

 private:
  int id_ = 0;
};

// One timestamped frame: two optional hand observations plus identity and label.
struct FrameRecord {
  std::string video_id;
  std::string worker_id;
  int64_t frame_index = 0;
  std::array<std::optional<HandObservation>, kSlots> slots;
  std::optional<MotionClass> label;
};

// Dimension-reduction granularity: all 21 points, their center of gravity,
// or the five significant points (wrist plus thumb/index/middle/pinky tips).
enum class ReduceMode { Full, CenterOfGravity, FivePoints };

int points_per_hand(ReduceMode mode);
int feature_length(ReduceMode mode);  // 2 * points_per_hand * 3
const char* reduce_mode_name(ReduceMode mode);
ReduceMode parse_reduce_mode(const std::string& s);

// Flattened carrier for one frame: slot 0 then slot 1, x,y,z contiguous per
// landmark. Absent slots hold NaN markers until imputation fills them.
struct FeatureVector {
  std::vector<float> values;
  ReduceMode layout = ReduceMode::Full;
  std::array<bool, kSlots> imputed{false, false};
};

// Unchecked frame data as read from a file row; validate_frame() turns it
// into a FrameRecord or rejects it.
struct RawSlot {
  bool present = false;
  std::optional<std::string> handedness;
  std::optional<float> handedness_score;
  std::optional<float> detection_score;
  std::array<std::optional<float>, kCoordsPerHand> coords;
};

struct RawFrame {
  std::string video_id;
  std::string worker_id;
  int64_t frame_index = 0;
  std::array<RawSlot, kSlots> slots;
  std::optional<int> label;
};

struct ValidateStats {
  int64_t out_of_range_coords = 0;  // x/y outside [0,1]; accepted, counted
};

FrameRecord validate_frame(const RawFrame& raw, ValidateStats* stats = nullptr);
RawFrame to_raw(const FrameRecord& record);

FeatureVector flatten(const FrameRecord& frame, ReduceMode layout = ReduceMode::Full);

// Reduces one hand's 63 flat coordinates to the layout's point set.
// Works on whatever values are present, so imputed constants reduce to the
// same constant and NaN markers stay NaN.
void reduce_slot(const float* in63, ReduceMode mode, float* out);

}  // namespace mpar

#pragma once

#include <cstdint>
#include <string>

#include "mpar/ingest.hpp"

namespace mpar {

enum class NormalizeMode { ImageAbsolute, OnMostRecent, PerSkeleton };

const char* normalize_mode_name(NormalizeMode mode);
NormalizeMode parse_normalize_mode(const std::string& s);

// The four preprocessing layers, applied in fixed order:
// hand swapping -> imputation -> dimension reduction -> normalization.
struct PreprocessConfig {
  bool swap_enabled = true;
  float impute_constant = 2.0f;
  ReduceMode reduce = ReduceMode::Full;
  NormalizeMode normalize = NormalizeMode::ImageAbsolute;
  float epsilon = 1e-6f;
};

struct PreprocessCounters {
  // OnMostRecent windows where a slot is absent in every frame; the slot
  // passes through as the imputed constant.
  int64_t no_reference_slots = 0;
};

// Slot 0 always holds the Left hand, slot 1 the Right. When both
// observations claim the same side, the higher handedness score keeps it.
void swap_hands(InstanceWindow& w);

// Fills every absent slot with the constant and sets its imputed bit.
void impute(InstanceWindow& w, float constant);

void reduce_dims(InstanceWindow& w, ReduceMode mode);

// Imputed slots bypass normalization so the sentinel constant survives.
void normalize(InstanceWindow& w, NormalizeMode mode, float epsilon,
               PreprocessCounters* counters = nullptr);

void preprocess(InstanceWindow& w, const PreprocessConfig& cfg,
                PreprocessCounters* counters = nullptr);

// Row-level building blocks shared with the streaming data path.
namespace detail {
void swap_row(float* feat, int half, SlotMeta* meta, uint8_t* imputed);
void normalize_skeleton(float* slot_vals, int points, float epsilon);
// Computes centroid (3 values) and extent of one slot's point set.
void skeleton_frame_stats(const float* slot_vals, int points, double centroid[3], double* extent);
}  // namespace detail

}  // namespace mpar

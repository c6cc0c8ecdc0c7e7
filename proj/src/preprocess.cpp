#include "mpar/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace mpar {

const char* normalize_mode_name(NormalizeMode mode) {
  switch (mode) {
    case NormalizeMode::ImageAbsolute: return "image_absolute";
    case NormalizeMode::OnMostRecent: return "on_most_recent";
    case NormalizeMode::PerSkeleton: return "per_skeleton";
  }
  return "image_absolute";
}

NormalizeMode parse_normalize_mode(const std::string& s) {
  if (s == "image_absolute") return NormalizeMode::ImageAbsolute;
  if (s == "on_most_recent") return NormalizeMode::OnMostRecent;
  if (s == "per_skeleton") return NormalizeMode::PerSkeleton;
  raise(Err::ConfigError, "unknown normalize mode '" + s + "'");
}

namespace detail {

void swap_row(float* feat, int half, SlotMeta* meta, uint8_t* imputed) {
  auto do_swap = [&] {
    for (int i = 0; i < half; ++i) std::swap(feat[i], feat[half + i]);
    std::swap(meta[0], meta[1]);
    std::swap(imputed[0], imputed[1]);
  };
  const bool p0 = meta[0].present;
  const bool p1 = meta[1].present;
  if (!p0 && !p1) return;
  if (p0 != p1) {
    // Single hand: place it on its claimed side.
    const int s = p0 ? 0 : 1;
    const int want = meta[s].handedness == Handedness::Left ? 0 : 1;
    if (s != want) do_swap();
    return;
  }
  Handedness h0 = meta[0].handedness;
  Handedness h1 = meta[1].handedness;
  if (h0 == h1) {
    // Both claim the same side: the higher score keeps the claim, the loser
    // is reassigned the opposite side.
    const bool slot0_keeps = meta[0].handedness_score >= meta[1].handedness_score;
    const Handedness kept = h0;
    const Handedness other = kept == Handedness::Left ? Handedness::Right : Handedness::Left;
    if (slot0_keeps) {
      h1 = other;
    } else {
      h0 = other;
    }
    meta[0].handedness = h0;
    meta[1].handedness = h1;
  }
  if (h0 == Handedness::Right) do_swap();
}

void skeleton_frame_stats(const float* slot_vals, int points, double centroid[3], double* extent) {
  double sum[3] = {0, 0, 0};
  double lo[3], hi[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = slot_vals[d];
    hi[d] = slot_vals[d];
  }
  for (int p = 0; p < points; ++p)
    for (int d = 0; d < 3; ++d) {
      const double v = slot_vals[p * 3 + d];
      sum[d] += v;
      lo[d] = std::min(lo[d], v);
      hi[d] = std::max(hi[d], v);
    }
  double ext = 0;
  for (int d = 0; d < 3; ++d) {
    centroid[d] = sum[d] / points;
    ext = std::max(ext, hi[d] - lo[d]);
  }
  *extent = ext;
}

void normalize_skeleton(float* slot_vals, int points, float epsilon) {
  double centroid[3];
  double extent;
  skeleton_frame_stats(slot_vals, points, centroid, &extent);
  if (extent < epsilon) {
    for (int i = 0; i < points * 3; ++i) slot_vals[i] = 0.0f;
    return;
  }
  const float inv = static_cast<float>(1.0 / extent);
  for (int p = 0; p < points; ++p)
    for (int d = 0; d < 3; ++d)
      slot_vals[p * 3 + d] = (slot_vals[p * 3 + d] - static_cast<float>(centroid[d])) * inv;
}

}  // namespace detail

void swap_hands(InstanceWindow& w) {
  const int half = w.feature_len / 2;
  for (int r = 0; r < w.rows; ++r)
    detail::swap_row(w.row(r), half, &w.meta_at(r, 0), &w.imputed[static_cast<size_t>(r) * kSlots]);
}

void impute(InstanceWindow& w, float constant) {
  const int half = w.feature_len / 2;
  for (int r = 0; r < w.rows; ++r)
    for (int s = 0; s < kSlots; ++s) {
      if (w.meta_at(r, s).present) continue;
      float* vals = w.row(r) + s * half;
      std::fill(vals, vals + half, constant);
      w.set_imputed(r, s, true);
    }
}

void reduce_dims(InstanceWindow& w, ReduceMode mode) {
  if (mode == ReduceMode::Full || w.layout == mode) return;  // identity
  if (w.layout != ReduceMode::Full)
    raise(Err::InvalidSpec, "reduce_dims requires full-layout input");
  const int in_half = w.feature_len / 2;
  const int out_half = points_per_hand(mode) * kCoordsPerLandmark;
  std::vector<float> reduced(static_cast<size_t>(w.rows) * out_half * kSlots);
  for (int r = 0; r < w.rows; ++r) {
    const float* in = w.row(r);
    float* out = reduced.data() + static_cast<size_t>(r) * out_half * kSlots;
    for (int s = 0; s < kSlots; ++s) reduce_slot(in + s * in_half, mode, out + s * out_half);
  }
  w.features = std::move(reduced);
  w.feature_len = out_half * kSlots;
  w.layout = mode;
}

void normalize(InstanceWindow& w, NormalizeMode mode, float epsilon, PreprocessCounters* counters) {
  if (mode == NormalizeMode::ImageAbsolute) return;
  const int half = w.feature_len / 2;
  const int points = half / kCoordsPerLandmark;
  if (mode == NormalizeMode::PerSkeleton) {
    for (int r = 0; r < w.rows; ++r)
      for (int s = 0; s < kSlots; ++s) {
        if (w.imputed_at(r, s) || !w.meta_at(r, s).present) continue;
        detail::normalize_skeleton(w.row(r) + s * half, points, epsilon);
      }
    return;
  }
  // OnMostRecent: one reference transform per slot, taken from the most
  // recent frame where the slot is genuinely observed.
  for (int s = 0; s < kSlots; ++s) {
    int ref = -1;
    for (int r = w.rows - 1; r >= 0; --r)
      if (w.meta_at(r, s).present && !w.imputed_at(r, s)) {
        ref = r;
        break;
      }
    if (ref < 0) {
      if (counters) ++counters->no_reference_slots;
      continue;
    }
    double centroid[3];
    double extent;
    detail::skeleton_frame_stats(w.row(ref) + s * half, points, centroid, &extent);
    const bool degenerate = extent < epsilon;
    const float inv = degenerate ? 0.0f : static_cast<float>(1.0 / extent);
    for (int r = 0; r < w.rows; ++r) {
      if (w.imputed_at(r, s) || !w.meta_at(r, s).present) continue;
      float* vals = w.row(r) + s * half;
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

void preprocess(InstanceWindow& w, const PreprocessConfig& cfg, PreprocessCounters* counters) {
  if (cfg.swap_enabled) swap_hands(w);
  impute(w, cfg.impute_constant);
  reduce_dims(w, cfg.reduce);
  normalize(w, cfg.normalize, cfg.epsilon, counters);
}

}  // namespace mpar

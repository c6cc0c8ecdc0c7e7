#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mpar/skeleton.hpp"

namespace mpar {

struct ConfusionMatrix {
  // rows = true class, columns = predicted class
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

  int64_t total() const {
    int64_t n = 0;
    for (const auto& row : counts)
      for (int64_t c : row) n += c;
    return n;
  }
  int64_t diag() const {
    int64_t n = 0;
    for (int i = 0; i < kNumClasses; ++i) n += counts[i][i];
    return n;
  }
  int64_t row_sum(int i) const {
    int64_t n = 0;
    for (int64_t c : counts[i]) n += c;
    return n;
  }
  int64_t col_sum(int j) const {
    int64_t n = 0;
    for (int i = 0; i < kNumClasses; ++i) n += counts[i][j];
    return n;
  }
};

ConfusionMatrix confusion_matrix(const std::vector<MotionClass>& predictions,
                                 const std::vector<MotionClass>& labels);

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  int64_t support = 0;
  bool degenerate = false;  // a 0/0 was reported as 0
};

struct ClassReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  double micro_accuracy = 0;
};

ClassReport class_report(const ConfusionMatrix& cm);

std::map<std::string, double> grouped_accuracy(const std::vector<MotionClass>& predictions,
                                               const std::vector<MotionClass>& labels,
                                               const std::vector<std::string>& groups);

// Per-class accuracy over normalized position within each ground-truth
// segment: frame i of a segment of length L lands in bin floor(n_bins*i/L).
struct TemporalProfile {
  int n_bins = 10;
  std::array<std::vector<int64_t>, kNumClasses> total;    // [class][bin]
  std::array<std::vector<int64_t>, kNumClasses> correct;  // [class][bin]

  double accuracy(int cls, int bin) const {
    return total[cls][bin] == 0 ? 0.0
                                : static_cast<double>(correct[cls][bin]) / total[cls][bin];
  }
};

TemporalProfile temporal_profile(const std::vector<MotionClass>& predictions,
                                 const std::vector<MotionClass>& labels, int n_bins = 10);

struct TransitionStats {
  double share_near_transition = 0;   // erroneous frames within the margin of a class change
  double adjacent_confusion_rate = 0; // errors predicting the previous or next segment's class
  int64_t error_count = 0;
};

TransitionStats transition_error_share(const std::vector<MotionClass>& predictions,
                                       const std::vector<MotionClass>& labels, int margin_frames);

// Sliding majority vote; ties keep the original prediction.
std::vector<MotionClass> smooth(const std::vector<MotionClass>& predictions, int k);

struct Segment {
  MotionClass cls;
  int64_t start = 0;  // inclusive
  int64_t end = 0;    // inclusive
};

std::vector<Segment> segment(const std::vector<MotionClass>& sequence);

// Seconds between successive starts of anchor-class segments.
std::vector<double> cycle_times(const std::vector<Segment>& segments, MotionClass anchor,
                                double fps);

}  // namespace mpar

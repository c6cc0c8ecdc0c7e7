#include "mpar/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mpar {

namespace {

void check_aligned(size_t a, size_t b) {
  if (a != b)
    raise(Err::LengthMismatch,
          "sequences of length " + std::to_string(a) + " and " + std::to_string(b));
}

}  // namespace

ConfusionMatrix confusion_matrix(const std::vector<MotionClass>& predictions,
                                 const std::vector<MotionClass>& labels) {
  check_aligned(predictions.size(), labels.size());
  ConfusionMatrix cm;
  for (size_t i = 0; i < labels.size(); ++i) ++cm.counts[labels[i].id()][predictions[i].id()];
  return cm;
}

ClassReport class_report(const ConfusionMatrix& cm) {
  ClassReport report;
  const int64_t total = cm.total();
  report.micro_accuracy = total == 0 ? 0.0 : static_cast<double>(cm.diag()) / total;
  for (int c = 0; c < kNumClasses; ++c) {
    ClassMetrics& m = report.per_class[c];
    const int64_t tp = cm.counts[c][c];
    const int64_t rowsum = cm.row_sum(c);
    const int64_t colsum = cm.col_sum(c);
    m.support = rowsum;
    if (colsum == 0) {
      m.degenerate = true;
    } else {
      m.precision = static_cast<double>(tp) / colsum;
    }
    if (rowsum == 0) {
      m.degenerate = true;
    } else {
      m.recall = static_cast<double>(tp) / rowsum;
    }
    if (m.precision + m.recall == 0) {
      m.f1 = 0;
      m.degenerate = true;
    } else {
      m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
    }
  }
  return report;
}

std::map<std::string, double> grouped_accuracy(const std::vector<MotionClass>& predictions,
                                               const std::vector<MotionClass>& labels,
                                               const std::vector<std::string>& groups) {
  check_aligned(predictions.size(), labels.size());
  check_aligned(predictions.size(), groups.size());
  std::map<std::string, std::pair<int64_t, int64_t>> acc;  // group -> (correct, total)
  for (size_t i = 0; i < labels.size(); ++i) {
    auto& [correct, total] = acc[groups[i]];
    ++total;
    if (predictions[i] == labels[i]) ++correct;
  }
  std::map<std::string, double> out;
  for (const auto& [g, ct] : acc)
    out[g] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return out;
}

std::vector<Segment> segment(const std::vector<MotionClass>& sequence) {
  std::vector<Segment> out;
  for (size_t i = 0; i < sequence.size(); ++i) {
    if (out.empty() || out.back().cls != sequence[i]) {
      out.push_back(Segment{sequence[i], static_cast<int64_t>(i), static_cast<int64_t>(i)});
    } else {
      out.back().end = static_cast<int64_t>(i);
    }
  }
  return out;
}

TemporalProfile temporal_profile(const std::vector<MotionClass>& predictions,
                                 const std::vector<MotionClass>& labels, int n_bins) {
  check_aligned(predictions.size(), labels.size());
  if (n_bins < 1) raise(Err::InvalidSpec, "temporal profile needs at least one bin");
  TemporalProfile profile;
  profile.n_bins = n_bins;
  for (int c = 0; c < kNumClasses; ++c) {
    profile.total[c].assign(n_bins, 0);
    profile.correct[c].assign(n_bins, 0);
  }
  for (const Segment& seg : segment(labels)) {
    const int64_t len = seg.end - seg.start + 1;
    for (int64_t i = 0; i < len; ++i) {
      const int bin = static_cast<int>(static_cast<int64_t>(n_bins) * i / len);
      ++profile.total[seg.cls.id()][bin];
      if (predictions[seg.start + i] == seg.cls) ++profile.correct[seg.cls.id()][bin];
    }
  }
  return profile;
}

TransitionStats transition_error_share(const std::vector<MotionClass>& predictions,
                                       const std::vector<MotionClass>& labels, int margin_frames) {
  check_aligned(predictions.size(), labels.size());
  TransitionStats stats;
  const std::vector<Segment> segments = segment(labels);
  if (labels.empty()) return stats;

  // segment index per frame, for previous/next class lookup
  std::vector<int> seg_of(labels.size());
  for (size_t s = 0; s < segments.size(); ++s)
    for (int64_t i = segments[s].start; i <= segments[s].end; ++i) seg_of[i] = static_cast<int>(s);

  int64_t errors = 0, near = 0, adjacent = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) continue;
    ++errors;
    const int s = seg_of[i];
    // distance to the nearest class change (boundary sits between end and the
    // next start; a frame touching either side within the margin counts)
    int64_t dist = std::numeric_limits<int64_t>::max();
    if (s > 0) dist = std::min(dist, static_cast<int64_t>(i) - segments[s].start);
    if (s + 1 < static_cast<int>(segments.size()))
      dist = std::min(dist, segments[s].end - static_cast<int64_t>(i));
    if (dist <= margin_frames) ++near;
    if (s > 0 && predictions[i] == segments[s - 1].cls) ++adjacent;
    else if (s + 1 < static_cast<int>(segments.size()) && predictions[i] == segments[s + 1].cls)
      ++adjacent;
  }
  stats.error_count = errors;
  if (errors > 0) {
    stats.share_near_transition = static_cast<double>(near) / errors;
    stats.adjacent_confusion_rate = static_cast<double>(adjacent) / errors;
  }
  return stats;
}

std::vector<MotionClass> smooth(const std::vector<MotionClass>& predictions, int k) {
  if (k < 1 || k % 2 == 0)
    raise(Err::EvenWindow, "smoothing window must be odd and positive, got " + std::to_string(k));
  if (k == 1) return predictions;
  const int64_t n = static_cast<int64_t>(predictions.size());
  std::vector<MotionClass> out(predictions);
  const int half = k / 2;
  for (int64_t i = 0; i < n; ++i) {
    std::array<int, kNumClasses> votes{};
    const int64_t lo = std::max<int64_t>(0, i - half);
    const int64_t hi = std::min(n - 1, i + half);
    for (int64_t j = lo; j <= hi; ++j) ++votes[predictions[j].id()];
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (votes[c] > votes[best]) best = c;
    int holders = 0;
    for (int c = 0; c < kNumClasses; ++c)
      if (votes[c] == votes[best]) ++holders;
    // a contested majority keeps the original value
    out[i] = holders > 1 ? predictions[i] : MotionClass(best);
  }
  return out;
}

std::vector<double> cycle_times(const std::vector<Segment>& segments, MotionClass anchor,
                                double fps) {
  if (fps <= 0) raise(Err::InvalidSpec, "fps must be positive");
  std::vector<int64_t> starts;
  for (const Segment& seg : segments)
    if (seg.cls == anchor) starts.push_back(seg.start);
  std::vector<double> out;
  for (size_t i = 1; i < starts.size(); ++i)
    out.push_back(static_cast<double>(starts[i] - starts[i - 1]) / fps);
  return out;
}

}  // namespace mpar

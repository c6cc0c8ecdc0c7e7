#include "mpar/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mpar/model_io.hpp"
#include "mpar/preprocess.hpp"
#include "mpar/rng.hpp"

using namespace mpar;

namespace {

SynthSpec small_spec(int workers = 2, int repeats = 2) {
  SynthSpec spec = default_synth_spec();
  spec.n_workers = workers;
  spec.repeats = repeats;
  return spec;
}

std::string frames_as_text(const GeneratedWorker& w) {
  std::ostringstream out;
  write_skeleton_file(out, w.frames);
  return out.str();
}

}  // namespace

TEST_CASE("generation is byte-identical for the same spec and seed") {
  SynthSpec spec = small_spec();
  SynthResult a = generate(spec, 42);
  SynthResult b = generate(spec, 42);
  SynthResult c = generate(spec, 43);
  REQUIRE(a.workers.size() == 2);
  CHECK(frames_as_text(a.workers[0]) == frames_as_text(b.workers[0]));
  CHECK(frames_as_text(a.workers[1]) == frames_as_text(b.workers[1]));
  CHECK(frames_as_text(a.workers[0]) != frames_as_text(c.workers[0]));
}

TEST_CASE("worker streams are pairwise distinct") {
  SynthResult r = generate(small_spec(4), 7);
  for (size_t i = 0; i < r.workers.size(); ++i)
    for (size_t j = i + 1; j < r.workers.size(); ++j) {
      const std::string a = frames_as_text(r.workers[i]);
      const std::string b = frames_as_text(r.workers[j]);
      CHECK(fnv1a64(a.data(), a.size()) != fnv1a64(b.data(), b.size()));
    }
}

TEST_CASE("zero dropout leaves no absent slots") {
  SynthSpec spec = small_spec(1);
  spec.dropout_prob = 0.0;
  SynthResult r = generate(spec, 3);
  for (const FrameRecord& f : r.workers[0].frames) {
    CHECK(f.slots[0].has_value());
    CHECK(f.slots[1].has_value());
  }
}

TEST_CASE("frame indices are gapless from zero") {
  SynthResult r = generate(small_spec(1), 9);
  const auto& frames = r.workers[0].frames;
  for (size_t i = 0; i < frames.size(); ++i)
    CHECK(frames[i].frame_index == static_cast<int64_t>(i));
}

TEST_CASE("label tables and streams are mutually consistent") {
  SynthResult r = generate(small_spec(2), 11);
  for (const GeneratedWorker& w : r.workers) {
    std::vector<FrameRecord> copy = w.frames;
    for (FrameRecord& f : copy) f.label.reset();
    apply_labels(copy, w.labels);
    for (size_t i = 0; i < copy.size(); ++i) CHECK(*copy[i].label == *w.frames[i].label);
  }
}

TEST_CASE("cycle ground truth matches the label stream exactly") {
  SynthResult r = generate(small_spec(1, 3), 13);
  const GeneratedWorker& w = r.workers[0];
  std::vector<MotionClass> labels;
  for (const FrameRecord& f : w.frames) labels.push_back(*f.label);
  std::vector<double> measured = cycle_times(segment(labels), MotionClass(1), r.spec.fps);
  REQUIRE(measured.size() == w.true_cycle_times_s.size());
  for (size_t i = 0; i < measured.size(); ++i)
    CHECK(std::abs(measured[i] - w.true_cycle_times_s[i]) <= 1.0 / r.spec.fps + 1e-9);
}

TEST_CASE("configured mean duration is met empirically within 5%") {
  SynthSpec spec = small_spec(6, 20);
  spec.classes[3].duration_mean_s = 2.0;
  spec.error_burst_prob = 0;
  spec.sloppy_worker = 0;  // keep every worker's pace statistically clean
  SynthResult r = generate(spec, 21);
  double sum = 0;
  int64_t n = 0;
  for (const GeneratedWorker& w : r.workers)
    for (const Segment& s : w.true_segments)
      if (s.cls.id() == 3) {
        sum += static_cast<double>(s.end - s.start + 1) / spec.fps;
        ++n;
      }
  REQUIRE(n >= 100);
  CHECK(sum / n == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("dropout rate lands inside a 3-sigma binomial interval") {
  SynthSpec spec = small_spec(2, 6);
  spec.dropout_prob = 0.1;
  SynthResult r = generate(spec, 31);
  int64_t absent = 0, slots = 0;
  for (const GeneratedWorker& w : r.workers)
    for (const FrameRecord& f : w.frames) {
      slots += 2;
      absent += !f.slots[0].has_value();
      absent += !f.slots[1].has_value();
    }
  const double rate = static_cast<double>(absent) / slots;
  const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(slots));
  CHECK(std::abs(rate - 0.1) <= 3 * sigma);
}

TEST_CASE("describe reports the configured expectations") {
  SynthSpec spec = default_synth_spec();
  SynthStats stats = describe(spec);
  double cycle = 0;
  for (int c = 1; c <= 9; ++c) cycle += spec.classes[c].duration_mean_s;
  CHECK(stats.cycle_duration_s == doctest::Approx(cycle));
  CHECK(stats.dropout_rate == spec.dropout_prob);
  CHECK(stats.mean_duration_s[3] == spec.classes[3].duration_mean_s);
  CHECK(stats.frames_per_worker_estimate > 0);
}

TEST_CASE("invalid specs are rejected") {
  SynthSpec spec = small_spec();
  spec.dropout_prob = 1.5;
  try {
    generate(spec, 1);
    FAIL("expected InvalidSpec");
  } catch (const Error& e) {
    CHECK(e.code() == Err::InvalidSpec);
  }
}

TEST_CASE("a nearest-centroid classifier separates the default classes") {
  // oracle for class separability: per-window mean features (observed rows
  // per slot, via the imputed mask), centroids from the first 80% of each
  // stream, evaluated on the rest
  SynthSpec spec = small_spec(3, 4);
  SynthResult r = generate(spec, 55);
  PreprocessConfig cfg;  // swap + impute 2 + full + image absolute
  const int W = 9;

  std::array<std::vector<double>, kNumClasses> sums;
  std::array<int64_t, kNumClasses> counts{};
  for (auto& s : sums) s.assign(126, 0.0);

  struct Sample {
    std::vector<float> mean;
    int label;
  };
  std::vector<Sample> test_samples;

  for (const GeneratedWorker& w : r.workers) {
    std::vector<InstanceWindow> windows = build_windows(w.frames, W, 3, spec.fps);
    const size_t split = windows.size() * 8 / 10;
    for (size_t i = 0; i < windows.size(); ++i) {
      preprocess(windows[i], cfg);
      std::vector<float> mean(126, 0.0f);
      for (int s = 0; s < kSlots; ++s) {
        int observed = 0;
        for (int row = 0; row < W; ++row) {
          if (windows[i].imputed_at(row, s)) continue;
          for (int c = 0; c < 63; ++c) mean[s * 63 + c] += windows[i].row(row)[s * 63 + c];
          ++observed;
        }
        for (int c = 0; c < 63; ++c)
          mean[s * 63 + c] = observed > 0 ? mean[s * 63 + c] / static_cast<float>(observed)
                                          : cfg.impute_constant;
      }
      if (i < split) {
        for (int c = 0; c < 126; ++c) sums[windows[i].label.id()][c] += mean[c];
        ++counts[windows[i].label.id()];
      } else {
        test_samples.push_back({std::move(mean), windows[i].label.id()});
      }
    }
  }

  std::array<std::vector<double>, kNumClasses> centroids;
  for (int c = 0; c < kNumClasses; ++c) {
    centroids[c].assign(126, 0.0);
    if (counts[c] == 0) continue;
    for (int k = 0; k < 126; ++k) centroids[c][k] = sums[c][k] / static_cast<double>(counts[c]);
  }

  int64_t correct = 0;
  for (const Sample& s : test_samples) {
    int best = -1;
    double best_d = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      if (counts[c] == 0) continue;
      double d = 0;
      for (int k = 0; k < 126; ++k) {
        const double diff = s.mean[k] - centroids[c][k];
        d += diff * diff;
      }
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    correct += best == s.label;
  }
  REQUIRE(!test_samples.empty());
  const double accuracy = static_cast<double>(correct) / static_cast<double>(test_samples.size());
  CHECK(accuracy >= 0.90);
}

TEST_CASE("written dataset parses back through the ingest layer") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "mpar_synth_test").string();
  SynthResult r = generate(small_spec(2), 77);
  write_synth_dataset(r, dir);
  std::ifstream frames_in(fs::path(dir) / "frames_w1.csv");
  REQUIRE(frames_in.good());
  std::vector<FrameRecord> frames = parse_skeleton_file(frames_in);
  CHECK(frames.size() == r.workers[0].frames.size());
  std::ifstream labels_in(fs::path(dir) / "labels_w1.csv");
  LabelTable table = parse_label_table(labels_in);
  CHECK(table.entries.size() == r.workers[0].labels.entries.size());
  fs::remove_all(dir);
}

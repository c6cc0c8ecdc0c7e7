#include "mpar/ingest.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mpar/rng.hpp"

using namespace mpar;

namespace {

FrameRecord make_frame(int64_t index, std::optional<int> label = 1, bool slot0 = true,
                       bool slot1 = true, float base = 0.3f) {
  FrameRecord rec;
  rec.video_id = "v1";
  rec.worker_id = "w1";
  rec.frame_index = index;
  for (int s = 0; s < kSlots; ++s) {
    if ((s == 0 && !slot0) || (s == 1 && !slot1)) continue;
    HandObservation obs;
    obs.handedness = s == 0 ? Handedness::Left : Handedness::Right;
    obs.handedness_score = 0.9f;
    obs.detection_score = 0.9f;
    for (int i = 0; i < kLandmarksPerHand; ++i)
      obs.landmarks[i] = Landmark{base + 0.001f * i, base + 0.002f * i, 0.01f * s};
    rec.slots[s] = obs;
  }
  if (label) rec.label = MotionClass(*label);
  return rec;
}

std::vector<FrameRecord> make_stream(int n, std::optional<int> label = 1) {
  std::vector<FrameRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(make_frame(i, label));
  return out;
}

}  // namespace

TEST_CASE("skeleton csv round trip preserves records") {
  std::vector<FrameRecord> frames = {make_frame(0, 3), make_frame(1, std::nullopt, true, false),
                                     make_frame(5, 9, false, false)};
  std::ostringstream out;
  write_skeleton_file(out, frames);
  std::istringstream in(out.str());
  std::vector<FrameRecord> back = parse_skeleton_file(in);
  REQUIRE(back.size() == 3);
  CHECK(back[0].label->id() == 3);
  CHECK_FALSE(back[1].label.has_value());
  CHECK_FALSE(back[1].slots[1].has_value());
  CHECK(back[1].slots[0].has_value());
  CHECK_FALSE(back[2].slots[0].has_value());
  CHECK(back[2].frame_index == 5);
  CHECK(back[0].slots[0]->landmarks[4].x == doctest::Approx(0.304f));
}

TEST_CASE("parse rejects a row with a missing coordinate") {
  std::vector<FrameRecord> frames = {make_frame(0)};
  std::ostringstream out;
  write_skeleton_file(out, frames);
  std::string text = out.str();
  // blank out the last coordinate of slot 1 (field before the label)
  size_t last_comma = text.rfind(',');
  size_t prev_comma = text.rfind(',', last_comma - 1);
  text = text.substr(0, prev_comma + 1) + text.substr(last_comma);
  std::istringstream in(text);
  try {
    parse_skeleton_file(in);
    FAIL("expected MixedMissingness");
  } catch (const Error& e) {
    CHECK(e.code() == Err::MixedMissingness);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("parse rejects non-monotonic frame indices") {
  std::vector<FrameRecord> frames = {make_frame(5), make_frame(5)};
  std::ostringstream out;
  write_skeleton_file(out, frames);
  std::istringstream in(out.str());
  try {
    parse_skeleton_file(in);
    FAIL("expected NonMonotonicFrameIndex");
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonMonotonicFrameIndex);
  }
}

TEST_CASE("parse rejects a wrong field count") {
  std::ostringstream out;
  write_skeleton_file(out, {make_frame(0)});
  std::string text = out.str() + "v1,w1,1\n";
  std::istringstream in(text);
  try {
    parse_skeleton_file(in);
    FAIL("expected MalformedRow");
  } catch (const Error& e) {
    CHECK(e.code() == Err::MalformedRow);
  }
}

TEST_CASE("label table round trip and step-function application") {
  LabelTable table;
  table.entries = {{0, MotionClass(1)}, {300, MotionClass(2)}};
  std::ostringstream out;
  write_label_table(out, table);
  std::istringstream in(out.str());
  LabelTable back = parse_label_table(in);
  REQUIRE(back.entries.size() == 2);

  std::vector<FrameRecord> frames = {make_frame(299, std::nullopt), make_frame(300, std::nullopt)};
  apply_labels(frames, back);
  CHECK(frames[0].label->id() == 1);
  CHECK(frames[1].label->id() == 2);
}

TEST_CASE("apply_labels rejects an unlabeled prefix and an empty table") {
  std::vector<FrameRecord> frames = {make_frame(50, std::nullopt)};
  LabelTable table;
  try {
    apply_labels(frames, table);
    FAIL("expected EmptyTable");
  } catch (const Error& e) {
    CHECK(e.code() == Err::EmptyTable);
  }
  table.entries = {{100, MotionClass(3)}};
  try {
    apply_labels(frames, table);
    FAIL("expected UnlabeledPrefix");
  } catch (const Error& e) {
    CHECK(e.code() == Err::UnlabeledPrefix);
  }
}

TEST_CASE("single-entry table labels every frame") {
  std::vector<FrameRecord> frames = make_stream(20, std::nullopt);
  LabelTable table;
  table.entries = {{0, MotionClass(7)}};
  apply_labels(frames, table);
  for (const auto& f : frames) CHECK(f.label->id() == 7);
}

TEST_CASE("apply_labels agrees with a linear scan on random tables") {
  Rng rng = make_rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    LabelTable table;
    int64_t start = 0;
    const int entries = static_cast<int>(uniform_int(rng, 1, 8));
    for (int e = 0; e < entries; ++e) {
      table.entries.emplace_back(start, MotionClass(static_cast<int>(uniform_int(rng, 0, 9))));
      start += uniform_int(rng, 1, 40);
    }
    const int n = static_cast<int>(uniform_int(rng, 1, 120));
    std::vector<FrameRecord> frames = make_stream(n, std::nullopt);
    apply_labels(frames, table);
    for (const auto& f : frames) {
      // linear-scan oracle
      MotionClass expect = table.entries.front().second;
      for (const auto& [s, c] : table.entries)
        if (s <= f.frame_index) expect = c;
      CHECK(f.label->id() == expect.id());
    }
  }
}

TEST_CASE("emulate_fps identity, decimation, and non-divisor error") {
  std::vector<FrameRecord> stream = make_stream(10);
  CHECK(emulate_fps(stream, 30, 30).size() == 10);
  std::vector<FrameRecord> ds = emulate_fps(stream, 30, 10);
  REQUIRE(ds.size() == 4);  // ceil(10/3)
  CHECK(ds[0].frame_index == 0);
  CHECK(ds[1].frame_index == 3);
  CHECK(ds[2].frame_index == 6);
  CHECK(ds[3].frame_index == 9);
  try {
    emulate_fps(stream, 30, 7);
    FAIL("expected NonDivisorRate");
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonDivisorRate);
  }
}

TEST_CASE("emulate_fps output length is ceil(N/d) for all N") {
  for (int n = 0; n <= 64; ++n) {
    std::vector<FrameRecord> stream = make_stream(n);
    for (int target : {30, 15, 10, 6, 5, 3, 2, 1}) {
      const int64_t d = 30 / target;
      CHECK(static_cast<int64_t>(emulate_fps(stream, 30, target).size()) == (n + d - 1) / d);
    }
  }
}

TEST_CASE("split keeps the first floor(N*ratio) frames for training") {
  std::vector<FrameRecord> video = make_stream(1000);
  SplitFrames split = split_train_val(video, 0.8);
  REQUIRE(split.train.size() == 800);
  REQUIRE(split.val.size() == 200);
  CHECK(split.train.back().frame_index == 799);
  CHECK(split.val.front().frame_index == 800);
}

TEST_CASE("split is a per-video partition with train before val") {
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 1, 500));
    const double ratio = uniform(rng, 0.05, 0.95);
    std::vector<FrameRecord> video = make_stream(n);
    SplitFrames split = split_train_val(video, ratio);
    CHECK(split.train.size() + split.val.size() == static_cast<size_t>(n));
    CHECK(split.train.size() == static_cast<size_t>(std::floor(n * ratio)));
    if (!split.train.empty() && !split.val.empty())
      CHECK(split.train.back().frame_index < split.val.front().frame_index);
  }
}

TEST_CASE("split of an empty video fails") {
  try {
    split_train_val({}, 0.8);
    FAIL("expected EmptyVideo");
  } catch (const Error& e) {
    CHECK(e.code() == Err::EmptyVideo);
  }
}

TEST_CASE("ratio 1.0 yields an empty validation set") {
  std::vector<FrameRecord> video = make_stream(10);
  SplitFrames split = split_train_val(video, 1.0);
  CHECK(split.train.size() == 10);
  CHECK(split.val.empty());
}

TEST_CASE("build_windows basic count and labeling") {
  std::vector<FrameRecord> stream = make_stream(106);
  std::vector<InstanceWindow> windows = build_windows(stream, 104, 1, 30);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].end_frame == 103);
  CHECK(windows[2].end_frame == 105);
  CHECK(windows[0].rows == 104);
  CHECK(windows[0].feature_len == 126);
}

TEST_CASE("window history budget: 104 at 30 fps fits 3.5 s, 120 does not") {
  std::vector<FrameRecord> stream = make_stream(130);
  CHECK_NOTHROW(build_windows(stream, 104, 1, 30, 3.5));
  try {
    build_windows(stream, 120, 1, 30, 3.5);
    FAIL("expected HistoryBudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == Err::HistoryBudgetExceeded);
  }
}

TEST_CASE("build_windows rejects a stream shorter than the window") {
  std::vector<FrameRecord> stream = make_stream(10);
  try {
    build_windows(stream, 11, 1, 30);
    FAIL("expected StreamTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == Err::StreamTooShort);
  }
}

TEST_CASE("build_windows equals naive slice enumeration on random streams") {
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 1, 60));
    const int w = static_cast<int>(uniform_int(rng, 1, n));
    const int hop = static_cast<int>(uniform_int(rng, 1, 5));
    std::vector<FrameRecord> stream;
    for (int i = 0; i < n; ++i)
      stream.push_back(make_frame(i, static_cast<int>(uniform_int(rng, 0, 9)), bernoulli(rng, 0.8),
                                  bernoulli(rng, 0.8),
                                  static_cast<float>(uniform(rng, 0.0, 1.0))));
    std::vector<InstanceWindow> windows = build_windows(stream, w, hop, 30);

    // naive oracle: every position t in {w-1, w-1+hop, ...}, rows are the slice [t-w+1, t]
    size_t wi = 0;
    for (int t = w - 1; t < n; t += hop, ++wi) {
      REQUIRE(wi < windows.size());
      const InstanceWindow& win = windows[wi];
      CHECK(win.end_frame == stream[t].frame_index);
      CHECK(win.label == *stream[t].label);
      for (int r = 0; r < w; ++r) {
        FeatureVector fv = flatten(stream[t - w + 1 + r]);
        for (int c = 0; c < win.feature_len; ++c) {
          const float got = win.row(r)[c];
          const float want = fv.values[c];
          if (std::isnan(want))
            CHECK(std::isnan(got));
          else
            CHECK(got == want);
        }
      }
    }
    CHECK(wi == windows.size());
  }
}

#include "mpar/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mpar/csv.hpp"
#include "mpar/rng.hpp"

namespace mpar {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHandSeparation = 0.13;
constexpr double kHandScale = 0.065;
constexpr double kGlideSeconds = 0.2;

// Standard 21-landmark hand layout: wrist, then four joints per finger.
struct FingerShape {
  double angle_deg;
  double reach;  // relative length
};
constexpr std::array<FingerShape, 5> kFingers = {{
    {-55.0, 0.72},  // thumb
    {-20.0, 1.00},  // index
    {0.0, 1.08},    // middle
    {20.0, 1.00},   // ring
    {42.0, 0.82},   // pinky
}};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

struct HandPose {
  double px, py, pz;  // palm anchor
  double curl;        // 0 open .. 1 closed
};

void emit_hand(const HandPose& pose, double mirror, Rng& noise_rng, double noise_sigma,
               HandObservation& obs) {
  // wrist
  obs.landmarks[0] = Landmark{static_cast<float>(clamp01(pose.px + gaussian(noise_rng, 0, noise_sigma))),
                              static_cast<float>(clamp01(pose.py + gaussian(noise_rng, 0, noise_sigma))),
                              static_cast<float>(pose.pz + gaussian(noise_rng, 0, noise_sigma))};
  for (int f = 0; f < 5; ++f) {
    const double theta = (90.0 + mirror * kFingers[f].angle_deg) * kPi / 180.0;
    for (int j = 1; j <= 4; ++j) {
      const double frac = 0.25 * j;
      // curl pulls the outer joints back toward the palm
      const double radius =
          kHandScale * kFingers[f].reach * frac * (1.0 - pose.curl * 0.55 * frac);
      const double x = pose.px + std::cos(theta) * radius * mirror;
      const double y = pose.py - std::sin(theta) * radius;
      const double z = pose.pz - 0.15 * radius * (1.0 + pose.curl);
      obs.landmarks[f * 4 + j] =
          Landmark{static_cast<float>(clamp01(x + gaussian(noise_rng, 0, noise_sigma))),
                   static_cast<float>(clamp01(y + gaussian(noise_rng, 0, noise_sigma))),
                   static_cast<float>(z + gaussian(noise_rng, 0, noise_sigma))};
    }
  }
}

struct SegmentPlan {
  int cls = 0;
  int64_t frames = 0;
};

}  // namespace

SynthSpec default_synth_spec() {
  SynthSpec spec;
  // nine workspace regions on a table grid; depth staggers by class
  const double cx[9] = {0.20, 0.50, 0.80, 0.20, 0.50, 0.80, 0.25, 0.50, 0.80};
  const double cy[9] = {0.25, 0.20, 0.25, 0.50, 0.55, 0.50, 0.80, 0.75, 0.80};
  for (int c = 1; c <= 9; ++c) {
    ClassMotion& m = spec.classes[c];
    m.center_x = cx[c - 1];
    m.center_y = cy[c - 1];
    m.freq_hz = 0.35 + 0.11 * c;
    m.amp_x = 0.050 + 0.004 * (c % 3);
    m.amp_y = 0.040 + 0.004 * (c % 4);
    m.depth_base = 0.04 * c;
    m.depth_amp = 0.02 + 0.003 * c;
    m.articulation_hz = 0.7 + 0.17 * c;
    m.articulation_depth = 0.25 + 0.06 * (c % 5);
    m.duration_mean_s = 3.0 + 0.1 * c;
    m.duration_jitter_s = 0.25;
  }
  // the error class wanders erratically at depth
  ClassMotion& err = spec.classes[0];
  err.center_x = 0.5;
  err.center_y = 0.5;
  err.freq_hz = 3.0;
  err.amp_x = 0.05;
  err.amp_y = 0.05;
  err.depth_base = 0.55;
  err.depth_amp = 0.08;
  err.articulation_hz = 4.0;
  err.articulation_depth = 0.8;
  err.duration_mean_s = 0.8;
  err.duration_jitter_s = 0.3;
  return spec;
}

SynthStats describe(const SynthSpec& spec) {
  SynthStats stats;
  double cycle = 0;
  for (int c = 0; c < kNumClasses; ++c) stats.mean_duration_s[c] = spec.classes[c].duration_mean_s;
  for (int c = 1; c <= 9; ++c) cycle += spec.classes[c].duration_mean_s;
  stats.cycle_duration_s = cycle;
  stats.dropout_rate = spec.dropout_prob;
  stats.frames_per_worker_estimate =
      spec.repeats * cycle * spec.fps * (1.0 + 9 * spec.error_burst_prob * spec.error_burst_mean_s / cycle);
  return stats;
}

SynthResult generate(const SynthSpec& spec, uint64_t seed) {
  if (spec.n_workers < 1 || spec.fps < 1 || spec.repeats < 1 ||
      spec.dropout_prob < 0 || spec.dropout_prob > 1 || spec.error_burst_prob < 0 ||
      spec.error_burst_prob > 1)
    raise(Err::InvalidSpec, "synthetic spec out of range");
  for (const ClassMotion& m : spec.classes)
    if (m.duration_mean_s <= 0 || m.freq_hz <= 0)
      raise(Err::InvalidSpec, "class durations and frequencies must be positive");

  SynthResult result;
  result.spec = spec;
  for (int w = 1; w <= spec.n_workers; ++w) {
    Rng rng = make_rng(seed, 0x776f726bull + w);
    GeneratedWorker worker;
    worker.worker_id = "w" + std::to_string(w);
    worker.video_id = "v" + std::to_string(w);

    WorkerStyle style;
    style.speed = uniform(rng, 0.92, 1.08);
    style.amplitude = uniform(rng, 0.90, 1.10);
    style.noise_sigma = uniform(rng, 0.005, 0.010);
    style.offset_x = uniform(rng, -0.015, 0.015);
    style.offset_y = uniform(rng, -0.015, 0.015);
    if (w == spec.sloppy_worker) {
      style.noise_sigma = 0.02;
      style.reroll_per_segment = true;
    }

    // segment schedule: repeats x (1..9), error bursts injected between
    std::vector<SegmentPlan> plan;
    for (int rep = 0; rep < spec.repeats; ++rep) {
      for (int c = 1; c <= 9; ++c) {
        const double speed = style.reroll_per_segment ? uniform(rng, 0.70, 1.35) : style.speed;
        const double secs =
            std::max(0.5, gaussian(rng, spec.classes[c].duration_mean_s,
                                   spec.classes[c].duration_jitter_s)) /
            speed;
        plan.push_back({c, std::max<int64_t>(1, std::llround(secs * spec.fps))});
        if (bernoulli(rng, spec.error_burst_prob)) {
          const double burst = std::max(
              0.3, gaussian(rng, spec.error_burst_mean_s, spec.classes[0].duration_jitter_s));
          plan.push_back({0, std::max<int64_t>(1, std::llround(burst * spec.fps))});
        }
      }
    }

    // phase offsets per worker keep streams distinct
    const double phase_l = uniform(rng, 0, 2 * kPi);
    const double phase_r = uniform(rng, 0, 2 * kPi);

    double prev_lx = 0.5, prev_ly = 0.5, prev_rx = 0.5, prev_ry = 0.5;
    double err_lx = 0.5, err_ly = 0.5, err_rx = 0.5, err_ry = 0.5;
    int64_t frame = 0;
    for (const SegmentPlan& seg : plan) {
      const ClassMotion& m = spec.classes[seg.cls];
      const double seg_amp = style.amplitude * (style.reroll_per_segment ? uniform(rng, 0.7, 1.35) : 1.0);
      const int64_t seg_start = frame;
      worker.labels.entries.emplace_back(seg_start, MotionClass(seg.cls));
      worker.true_segments.push_back(Segment{MotionClass(seg.cls), seg_start, seg_start + seg.frames - 1});
      if (seg.cls == 1) worker.cycle_start_frames.push_back(seg_start);
      if (seg.cls == 0) {
        err_lx = prev_lx;
        err_ly = prev_ly;
        err_rx = prev_rx;
        err_ry = prev_ry;
      }

      for (int64_t i = 0; i < seg.frames; ++i, ++frame) {
        const double t = static_cast<double>(frame) / spec.fps;
        const double tl = static_cast<double>(i) / spec.fps;

        HandPose left{}, right{};
        if (seg.cls == 0) {
          // incorrect movement: hands drift on a random walk across the table
          err_lx = clamp01(err_lx + gaussian(rng, 0, 0.02));
          err_ly = clamp01(err_ly + gaussian(rng, 0, 0.02));
          err_rx = clamp01(err_rx + gaussian(rng, 0, 0.02));
          err_ry = clamp01(err_ry + gaussian(rng, 0, 0.02));
          const double buzz = std::sin(2 * kPi * m.freq_hz * t + phase_l);
          left = {err_lx + 0.02 * buzz, err_ly - 0.02 * buzz, m.depth_base +
                  m.depth_amp * std::sin(2 * kPi * m.freq_hz * 1.3 * t),
                  0.5 + 0.5 * std::sin(2 * kPi * m.articulation_hz * t)};
          right = {err_rx - 0.02 * buzz, err_ry + 0.02 * buzz, m.depth_base +
                   m.depth_amp * std::cos(2 * kPi * m.freq_hz * 1.1 * t),
                   0.5 + 0.5 * std::cos(2 * kPi * m.articulation_hz * t)};
        } else {
          const double f = m.freq_hz * style.speed;
          const double cxx = m.center_x + style.offset_x;
          const double cyy = m.center_y + style.offset_y;
          left.px = cxx - kHandSeparation + seg_amp * m.amp_x * std::sin(2 * kPi * f * t + phase_l);
          left.py = cyy + seg_amp * m.amp_y * std::sin(2 * kPi * f * 0.77 * t + phase_l * 0.5);
          right.px = cxx + kHandSeparation + seg_amp * m.amp_x * std::sin(2 * kPi * f * t + phase_r + kPi / 3);
          right.py = cyy + seg_amp * m.amp_y * std::sin(2 * kPi * f * 0.77 * t + phase_r * 0.5 + kPi / 5);
          left.pz = m.depth_base + m.depth_amp * std::sin(2 * kPi * f * 0.5 * t);
          right.pz = m.depth_base + m.depth_amp * std::cos(2 * kPi * f * 0.5 * t);
          const double art = std::sin(2 * kPi * m.articulation_hz * style.speed * tl);
          left.curl = m.articulation_depth * (0.5 + 0.5 * art);
          right.curl = m.articulation_depth * (0.5 - 0.5 * art);
        }

        // glide from wherever the hands were into the new routine
        if (tl < kGlideSeconds && frame > 0) {
          const double a = tl / kGlideSeconds;
          const double ease = a * a * (3 - 2 * a);
          left.px = prev_lx + (left.px - prev_lx) * ease;
          left.py = prev_ly + (left.py - prev_ly) * ease;
          right.px = prev_rx + (right.px - prev_rx) * ease;
          right.py = prev_ry + (right.py - prev_ry) * ease;
        } else {
          prev_lx = left.px;
          prev_ly = left.py;
          prev_rx = right.px;
          prev_ry = right.py;
        }

        FrameRecord rec;
        rec.video_id = worker.video_id;
        rec.worker_id = worker.worker_id;
        rec.frame_index = frame;
        rec.label = MotionClass(seg.cls);

        HandObservation left_obs, right_obs;
        emit_hand(left, -1.0, rng, style.noise_sigma, left_obs);
        emit_hand(right, 1.0, rng, style.noise_sigma, right_obs);
        left_obs.handedness = Handedness::Left;
        right_obs.handedness = Handedness::Right;
        for (HandObservation* obs : {&left_obs, &right_obs}) {
          obs->handedness_score = static_cast<float>(clamp01(uniform(rng, 0.85, 0.99)));
          obs->detection_score = static_cast<float>(clamp01(uniform(rng, 0.80, 0.99)));
          if (bernoulli(rng, spec.hand_mislabel_prob)) {
            obs->handedness =
                obs->handedness == Handedness::Left ? Handedness::Right : Handedness::Left;
            obs->handedness_score = static_cast<float>(uniform(rng, 0.50, 0.70));
          }
        }
        const bool drop_left = bernoulli(rng, spec.dropout_prob);
        const bool drop_right = bernoulli(rng, spec.dropout_prob);
        const bool shuffled = bernoulli(rng, spec.slot_shuffle_prob);
        std::array<std::optional<HandObservation>, 2> hands;
        if (!drop_left) hands[shuffled ? 1 : 0] = left_obs;
        if (!drop_right) hands[shuffled ? 0 : 1] = right_obs;
        rec.slots = hands;
        worker.frames.push_back(std::move(rec));
      }
    }

    for (size_t i = 1; i < worker.cycle_start_frames.size(); ++i)
      worker.true_cycle_times_s.push_back(
          static_cast<double>(worker.cycle_start_frames[i] - worker.cycle_start_frames[i - 1]) /
          spec.fps);
    result.workers.push_back(std::move(worker));
  }
  return result;
}

void write_synth_dataset(const SynthResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json streams = nlohmann::json::array();
  std::ofstream segs_out(fs::path(dir) / "ground_truth_segments.csv");
  segs_out << "worker_id,video_id,class_id,start_frame,end_frame\n";
  std::ofstream cycles_out(fs::path(dir) / "ground_truth_cycles.csv");
  cycles_out << "worker_id,video_id,cycle_index,start_frame,duration_frames,duration_s\n";

  for (const GeneratedWorker& w : result.workers) {
    const std::string frames_name = "frames_" + w.worker_id + ".csv";
    const std::string labels_name = "labels_" + w.worker_id + ".csv";
    {
      std::ofstream out(fs::path(dir) / frames_name);
      if (!out) raise(Err::IoError, "cannot write " + frames_name);
      write_skeleton_file(out, w.frames);
    }
    {
      std::ofstream out(fs::path(dir) / labels_name);
      write_label_table(out, w.labels);
    }
    const bool holdout = w.worker_id == "w" + std::to_string(result.spec.holdout_worker);
    streams.push_back({{"frames", frames_name},
                       {"labels", labels_name},
                       {"video_id", w.video_id},
                       {"worker_id", w.worker_id},
                       {"holdout", holdout}});
    for (const Segment& s : w.true_segments)
      segs_out << w.worker_id << ',' << w.video_id << ',' << s.cls.id() << ',' << s.start << ','
               << s.end << '\n';
    for (size_t i = 1; i < w.cycle_start_frames.size(); ++i) {
      const int64_t frames = w.cycle_start_frames[i] - w.cycle_start_frames[i - 1];
      cycles_out << w.worker_id << ',' << w.video_id << ',' << i - 1 << ','
                 << w.cycle_start_frames[i - 1] << ',' << frames << ','
                 << fmt_double(static_cast<double>(frames) / result.spec.fps) << '\n';
    }
  }

  nlohmann::json index;
  index["fps"] = result.spec.fps;
  index["streams"] = streams;
  index["ground_truth_segments"] = "ground_truth_segments.csv";
  index["ground_truth_cycles"] = "ground_truth_cycles.csv";
  std::ofstream idx(fs::path(dir) / "dataset.json");
  idx << index.dump(2) << '\n';

  nlohmann::json manifest;
  manifest["workers"] = result.spec.n_workers;
  manifest["fps"] = result.spec.fps;
  manifest["repeats"] = result.spec.repeats;
  manifest["dropout_prob"] = result.spec.dropout_prob;
  manifest["error_burst_prob"] = result.spec.error_burst_prob;
  manifest["sloppy_worker"] = result.spec.sloppy_worker;
  manifest["holdout_worker"] = result.spec.holdout_worker;
  std::ofstream mf(fs::path(dir) / "synth_manifest.json");
  mf << manifest.dump(2) << '\n';
}

}  // namespace mpar

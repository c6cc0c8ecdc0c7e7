#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "mpar/model.hpp"

namespace mpar {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

struct PlateauConfig {
  double factor = 0.1;  // lr multiplier on plateau
  int patience = 10;    // non-improving epochs before a reduction
  double min_delta = 1e-4;
  double min_lr = 1e-7;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 32;
  int batch_size = 64;
  AdamConfig adam;
  PlateauConfig plateau;
  uint64_t seed = 0;
};

template <class T>
struct AdamState {
  std::vector<Mat<T>> m, v;
  int64_t t = 0;

  template <class ParamPtrs>
  static AdamState init(const ParamPtrs& params) {
    AdamState st;
    for (const auto* p : params) {
      st.m.emplace_back(p->rows, p->cols);
      st.v.emplace_back(p->rows, p->cols);
    }
    return st;
  }
};

// One Adam update with bias correction; increments the step counter.
template <class T>
void adam_step(std::vector<Mat<T>*> params, const std::vector<Mat<T>>& grads, AdamState<T>& st,
               double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    raise(Err::ShapeMismatch, "optimizer state does not match parameters");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Mat<T>& p = *params[i];
    const Mat<T>& g = grads[i];
    Mat<T>& m = st.m[i];
    Mat<T>& v = st.v[i];
    for (int64_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g.d[k]);
      const double mk = cfg.beta1 * m.d[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v.d[k] + (1.0 - cfg.beta2) * gk * gk;
      m.d[k] = static_cast<T>(mk);
      v.d[k] = static_cast<T>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      p.d[k] = static_cast<T>(p.d[k] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// Keras-style reduce-on-plateau, mode min: a reduction fires after `patience`
// consecutive epochs without an improvement of at least min_delta, then a
// cooldown of `patience` epochs suppresses the next one.
class PlateauScheduler {
 public:
  PlateauScheduler(const PlateauConfig& cfg, double initial_lr) : cfg_(cfg), lr_(initial_lr) {}

  double on_epoch(double monitored) {
    if (cooldown_ > 0) {
      --cooldown_;
      wait_ = 0;
    }
    if (monitored < best_ - cfg_.min_delta) {
      best_ = monitored;
      wait_ = 0;
    } else if (cooldown_ == 0) {
      ++wait_;
      if (wait_ >= cfg_.patience) {
        lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
        wait_ = 0;
        cooldown_ = cfg_.patience;
      }
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  PlateauConfig cfg_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
  int cooldown_ = 0;
};

// Replays the history through the scheduler and returns the resulting rate.
double reduce_lr_on_plateau(const std::vector<double>& monitored, const PlateauConfig& cfg,
                            double current_lr);

// Deterministic random-access view over training windows; gather materializes
// a batch into a dense (count, W*F) buffer plus labels.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual int64_t size() const = 0;
  virtual int feature_cols() const = 0;  // W*F
  virtual void gather(const int64_t* idx, int count, float* out, int* labels) const = 0;
};

// Batch source over preprocessed, materialized windows.
class WindowVectorSource final : public BatchSource {
 public:
  explicit WindowVectorSource(const std::vector<InstanceWindow>* windows) : windows_(windows) {}
  int64_t size() const override { return static_cast<int64_t>(windows_->size()); }
  int feature_cols() const override {
    return windows_->empty() ? 0 : (*windows_)[0].rows * (*windows_)[0].feature_len;
  }
  void gather(const int64_t* idx, int count, float* out, int* labels) const override;

 private:
  const std::vector<InstanceWindow>* windows_;
};

struct EpochStats {
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double learning_rate = 0;
};
using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
  Model model;
  TrainHistory history;
};

// Deterministic given cfg.seed: init, per-epoch shuffle order, and the fixed
// accumulation order make repeated runs bit-identical within one build.
TrainResult train(const ModelSpec& spec, const ModelManifest& manifest,
                  const BatchSource& train_set, const BatchSource* val_set,
                  const TrainConfig& cfg);

struct Metrics {
  double loss = 0;
  double accuracy = 0;
};
Metrics evaluate(const Model& model, const BatchSource& data, int batch_size = 256);

// Per-window prediction: argmax probabilities, ties to the lowest class id.
struct Prediction {
  MotionClass cls;
  std::array<float, kNumClasses> probs{};
};
Prediction predict(const Model& model, const float* window_features, int cols);

// Batched per-window predictions for evaluation drivers.
std::vector<MotionClass> predict_all(const Model& model, const BatchSource& data,
                                     int batch_size = 256);

}  // namespace mpar

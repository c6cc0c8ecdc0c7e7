#include "mpar/train.hpp"

#include <algorithm>
#include <numeric>

namespace mpar {

double reduce_lr_on_plateau(const std::vector<double>& monitored, const PlateauConfig& cfg,
                            double current_lr) {
  if (monitored.empty()) raise(Err::EmptyTrainSet, "plateau schedule needs a non-empty history");
  PlateauScheduler sched(cfg, current_lr);
  for (double m : monitored) sched.on_epoch(m);
  return sched.lr();
}

void WindowVectorSource::gather(const int64_t* idx, int count, float* out, int* labels) const {
  const int cols = feature_cols();
  for (int i = 0; i < count; ++i) {
    const InstanceWindow& w = (*windows_)[idx[i]];
    std::copy(w.features.begin(), w.features.end(), out + static_cast<int64_t>(i) * cols);
    labels[i] = w.label.id();
  }
}

namespace {

struct BatchEval {
  double loss_sum = 0;
  int64_t correct = 0;
  int64_t count = 0;
};

void eval_batches(const Model& model, const BatchSource& data, int batch_size, BatchEval& acc) {
  const int64_t n = data.size();
  const int cols = data.feature_cols();
  NetState<float> ws;
  Mat<float> batch;
  std::vector<int> labels;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int count = static_cast<int>(std::min<int64_t>(batch_size, n - start));
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    batch.resize(count, cols);
    labels.assign(count, 0);
    data.gather(idx.data(), count, batch.d.data(), labels.data());
    const Mat<float>& probs = model.forward(batch, ws);
    acc.loss_sum += static_cast<double>(cross_entropy(probs, labels)) * count;
    for (int b = 0; b < count; ++b)
      if (argmax_class(probs.row(b), probs.cols) == labels[b]) ++acc.correct;
    acc.count += count;
  }
}

}  // namespace

Metrics evaluate(const Model& model, const BatchSource& data, int batch_size) {
  BatchEval acc;
  eval_batches(model, data, batch_size, acc);
  Metrics m;
  if (acc.count > 0) {
    m.loss = acc.loss_sum / static_cast<double>(acc.count);
    m.accuracy = static_cast<double>(acc.correct) / static_cast<double>(acc.count);
  }
  return m;
}

std::vector<MotionClass> predict_all(const Model& model, const BatchSource& data, int batch_size) {
  const int64_t n = data.size();
  const int cols = data.feature_cols();
  std::vector<MotionClass> out;
  out.reserve(n);
  NetState<float> ws;
  Mat<float> batch;
  std::vector<int> labels;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int count = static_cast<int>(std::min<int64_t>(batch_size, n - start));
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    batch.resize(count, cols);
    labels.assign(count, 0);
    data.gather(idx.data(), count, batch.d.data(), labels.data());
    const Mat<float>& probs = model.forward(batch, ws);
    for (int b = 0; b < count; ++b) out.push_back(MotionClass(argmax_class(probs.row(b), probs.cols)));
  }
  return out;
}

Prediction predict(const Model& model, const float* window_features, int cols) {
  if (cols != model.spec.window * model.spec.features)
    raise(Err::ShapeMismatch, "window feature length does not match the model input");
  Mat<float> batch(1, cols);
  std::copy(window_features, window_features + cols, batch.d.data());
  NetState<float> ws;
  const Mat<float>& probs = model.forward(batch, ws);
  Prediction p;
  for (int j = 0; j < probs.cols && j < kNumClasses; ++j) p.probs[j] = probs.at(0, j);
  p.cls = MotionClass(argmax_class(probs.row(0), probs.cols));
  return p;
}

TrainResult train(const ModelSpec& spec, const ModelManifest& manifest,
                  const BatchSource& train_set, const BatchSource* val_set,
                  const TrainConfig& cfg) {
  if (train_set.size() == 0) raise(Err::EmptyTrainSet, "no training instances");
  if (cfg.learning_rate <= 0) raise(Err::InvalidSpec, "learning rate must be positive");
  if (cfg.plateau.factor <= 0 || cfg.plateau.factor >= 1)
    raise(Err::InvalidSpec, "plateau factor must lie in (0,1)");

  TrainResult result;
  result.model = build_model<float>(spec, cfg.seed);
  result.model.manifest = manifest;
  Model& model = result.model;

  std::vector<Mat<float>*> params = model.params();
  AdamState<float> adam = AdamState<float>::init(params);
  PlateauScheduler plateau(cfg.plateau, cfg.learning_rate);
  double lr = cfg.learning_rate;

  Rng shuffle_rng = make_rng(cfg.seed, 0x7368756666ull);
  std::vector<int64_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const int cols = train_set.feature_cols();
  NetState<float> ws;
  std::vector<Mat<float>> grads;
  Mat<float> batch;
  std::vector<int> labels;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    int64_t correct = 0, seen = 0;
    for (int64_t start = 0; start < static_cast<int64_t>(order.size()); start += cfg.batch_size) {
      const int count =
          static_cast<int>(std::min<int64_t>(cfg.batch_size, order.size() - start));
      batch.resize(count, cols);
      labels.assign(count, 0);
      train_set.gather(order.data() + start, count, batch.d.data(), labels.data());
      const float loss = model.backward(batch, labels, ws, grads);
      const Mat<float>& probs = ws.acts.back();
      for (int b = 0; b < count; ++b)
        if (argmax_class(probs.row(b), probs.cols) == labels[b]) ++correct;
      loss_sum += static_cast<double>(loss) * count;
      seen += count;
      adam_step(params, grads, adam, lr, cfg.adam);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    stats.learning_rate = lr;
    if (val_set && val_set->size() > 0) {
      Metrics vm = evaluate(model, *val_set, std::max(cfg.batch_size, 64));
      stats.val_loss = vm.loss;
      stats.val_accuracy = vm.accuracy;
      lr = plateau.on_epoch(vm.loss);
    }
    result.history.push_back(stats);
  }
  return result;
}

}  // namespace mpar

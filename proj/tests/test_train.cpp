#include "mpar/train.hpp"

#include "doctest.h"
#include "mpar/pipeline.hpp"
#include "mpar/synthgen.hpp"

using namespace mpar;

namespace {

// A tiny learnable task: the label is encoded in the feature values.
struct ToySource final : public BatchSource {
  int n, cols;
  uint64_t seed;
  ToySource(int n, int cols, uint64_t seed) : n(n), cols(cols), seed(seed) {}
  int64_t size() const override { return n; }
  int feature_cols() const override { return cols; }
  void gather(const int64_t* idx, int count, float* out, int* labels) const override {
    for (int i = 0; i < count; ++i) {
      Rng rng = make_rng(seed, static_cast<uint64_t>(idx[i]));
      const int label = static_cast<int>(idx[i] % kNumClasses);
      for (int c = 0; c < cols; ++c)
        out[static_cast<int64_t>(i) * cols + c] =
            0.1f * label + static_cast<float>(gaussian(rng, 0.0, 0.02));
      labels[i] = label;
    }
  }
};

}  // namespace

TEST_CASE("training learns a linearly separable toy task") {
  ModelSpec spec = make_td_dense_spec(4, 3, {8}, {16});
  ToySource train_set(400, 12, 1);
  ToySource val_set(100, 12, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.seed = 5;
  TrainResult result = train(spec, ModelManifest{}, train_set, &val_set, cfg);
  REQUIRE(result.history.size() == 30);
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
  CHECK(result.history.back().val_accuracy > 0.9);
  // one entry per epoch with the learning rate that was in effect
  for (const EpochStats& e : result.history) CHECK(e.learning_rate > 0);
}

TEST_CASE("identical seeds give identical histories and parameters") {
  ModelSpec spec = make_td_dense_spec(4, 3, {6}, {});
  ToySource train_set(200, 12, 3);
  ToySource val_set(50, 12, 4);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.seed = 9;
  TrainResult a = train(spec, ModelManifest{}, train_set, &val_set, cfg);
  TrainResult b = train(spec, ModelManifest{}, train_set, &val_set, cfg);
  for (size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_loss == b.history[e].val_loss);
  }
  auto pa = a.model.params(), pb = b.model.params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->d == pb[i]->d);

  cfg.seed = 10;
  TrainResult c = train(spec, ModelManifest{}, train_set, &val_set, cfg);
  CHECK(c.history.back().train_loss != a.history.back().train_loss);
}

TEST_CASE("an empty training set is rejected") {
  ModelSpec spec = make_td_dense_spec(4, 3, {6}, {});
  ToySource empty(0, 12, 1);
  try {
    train(spec, ModelManifest{}, empty, nullptr, TrainConfig{});
    FAIL("expected EmptyTrainSet");
  } catch (const Error& e) {
    CHECK(e.code() == Err::EmptyTrainSet);
  }
}

TEST_CASE("the trained model embeds its preprocessing manifest") {
  ModelSpec spec = make_td_dense_spec(4, 3, {4}, {});
  ToySource train_set(50, 12, 1);
  ModelManifest manifest;
  manifest.fps = 15;
  manifest.window_len = 4;
  manifest.preprocess.normalize = NormalizeMode::OnMostRecent;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 1e-3;
  TrainResult result = train(spec, manifest, train_set, nullptr, cfg);
  CHECK(result.model.manifest.fps == 15);
  CHECK(result.model.manifest.preprocess.normalize == NormalizeMode::OnMostRecent);
}

TEST_CASE("forward rejects a shape-mismatched batch") {
  ModelSpec spec = make_td_dense_spec(4, 3, {4}, {});
  Model model = build_model<float>(spec, 1);
  Mat<float> bad(2, 11);
  NetState<float> ws;
  try {
    model.forward(bad, ws);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Err::ShapeMismatch);
  }
}

TEST_CASE("the published regimen defaults are pinned") {
  TrainConfig cfg;
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.epochs == 32);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.adam.beta1 == 0.9);
  CHECK(cfg.adam.beta2 == 0.999);
  CHECK(cfg.adam.eps == 1e-7);
  CHECK(cfg.plateau.factor == 0.1);
  CHECK(cfg.plateau.patience == 10);
  CHECK(cfg.plateau.min_delta == 1e-4);
  CHECK(cfg.plateau.min_lr == 1e-7);
}

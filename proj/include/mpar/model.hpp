#pragma once

#include <memory>

#include "mpar/layers.hpp"

namespace mpar {

inline constexpr double kProbClip = 1e-7;

template <class T>
struct NetState {
  std::vector<Mat<T>> acts;           // acts[i] = output of layer i
  std::vector<LayerCache<T>> caches;  // layer-internal buffers
};

template <class T>
struct ModelT {
  ModelSpec spec;
  ModelManifest manifest;
  std::vector<std::unique_ptr<Layer<T>>> layers;

  std::vector<Mat<T>*> params() {
    std::vector<Mat<T>*> out;
    for (auto& l : layers)
      for (Mat<T>* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<const Mat<T>*> params() const {
    std::vector<const Mat<T>*> out;
    for (const auto& l : layers)
      for (const Mat<T>* p : l->params()) out.push_back(p);
    return out;
  }

  // Brute-force count over materialized tensors.
  int64_t param_count() const {
    int64_t n = 0;
    for (const Mat<T>* p : params()) n += p->size();
    return n;
  }

  // x: (B, window*features); result: probabilities (B, classes) in ws.acts.back().
  const Mat<T>& forward(const Mat<T>& x, NetState<T>& ws) const {
    if (x.cols != spec.window * spec.features)
      raise(Err::ShapeMismatch, "batch has " + std::to_string(x.cols) + " columns, model expects " +
                                    std::to_string(spec.window * spec.features));
    ws.acts.resize(layers.size());
    ws.caches.resize(layers.size());
    const Mat<T>* cur = &x;
    for (size_t i = 0; i < layers.size(); ++i) {
      layers[i]->forward(*cur, ws.acts[i], ws.caches[i]);
      cur = &ws.acts[i];
    }
    return ws.acts.back();
  }

  // Runs forward, then backpropagates the mean cross-entropy; gradients are
  // accumulated into `grads` (zeroed here), aligned with params(). Returns the loss.
  T backward(const Mat<T>& x, const std::vector<int>& labels, NetState<T>& ws,
             std::vector<Mat<T>>& grads) const {
    if (static_cast<int>(labels.size()) != x.rows)
      raise(Err::ShapeMismatch, "labels/batch size mismatch");
    const Mat<T>& probs = forward(x, ws);
    const int B = x.rows;
    const int classes = probs.cols;

    std::vector<Mat<T>*> ps = const_cast<ModelT<T>*>(this)->params_mutable();
    grads.resize(ps.size());
    for (size_t i = 0; i < ps.size(); ++i) grads[i].resize(ps[i]->rows, ps[i]->cols);

    // Softmax + cross-entropy: d loss / d logits = (p - onehot) / B.
    // Samples where the clip floor is active contribute zero gradient,
    // matching the implemented (clipped) loss exactly.
    T loss = T(0);
    Mat<T> dlogits(B, classes);
    for (int b = 0; b < B; ++b) {
      const int y = labels[b];
      if (y < 0 || y >= classes) raise(Err::ShapeMismatch, "label out of range");
      const T p = probs.at(b, y);
      const T clipped = std::min(std::max(p, static_cast<T>(kProbClip)), T(1));
      loss -= std::log(clipped);
      if (p <= static_cast<T>(kProbClip)) continue;
      T* row = dlogits.row(b);
      const T* pr = probs.row(b);
      for (int j = 0; j < classes; ++j) row[j] = (pr[j] - (j == y ? T(1) : T(0))) / static_cast<T>(B);
    }
    loss /= static_cast<T>(B);

    // Walk layers in reverse; grads slices follow the same flattening order.
    std::vector<size_t> offsets(layers.size());
    size_t off = 0;
    for (size_t i = 0; i < layers.size(); ++i) {
      offsets[i] = off;
      off += layers[i]->params().size();
    }
    Mat<T> dcur = std::move(dlogits);
    Mat<T> dprev;
    for (size_t i = layers.size(); i-- > 0;) {
      std::vector<Mat<T>*> gslice;
      for (size_t k = 0; k < layers[i]->params().size(); ++k)
        gslice.push_back(&grads[offsets[i] + k]);
      const Mat<T>& input = i == 0 ? x : ws.acts[i - 1];
      layers[i]->backward(input, ws.acts[i], dcur, ws.caches[i], dprev, gslice);
      std::swap(dcur, dprev);
    }
    return loss;
  }

 private:
  std::vector<Mat<T>*> params_mutable() { return params(); }
};

using Model = ModelT<float>;

// Glorot-uniform weights from a seeded generator, zero biases, LSTM forget
// bias 1; the same seed rebuilds bit-identical parameters.
template <class T>
ModelT<T> build_model(const ModelSpec& spec, uint64_t seed) {
  validate_spec(spec);
  ModelT<T> model;
  model.spec = spec;
  model.manifest.window_len = spec.window;
  Rng rng = make_rng(seed, 0x6d6f64656cull);
  SeqDims dims{spec.window, spec.features};
  for (const LayerSpec& ls : spec.layers) {
    auto layer = make_layer<T>(ls);
    layer->build(dims, rng);
    dims = layer->out_dims();
    model.layers.push_back(std::move(layer));
  }
  return model;
}

// Mean over the batch of -log p[true class], p clipped to [1e-7, 1].
template <class T>
T cross_entropy(const Mat<T>& probs, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != probs.rows)
    raise(Err::LengthMismatch, "probs/labels row mismatch");
  T loss = T(0);
  for (int b = 0; b < probs.rows; ++b) {
    const T p = probs.at(b, labels[b]);
    loss -= std::log(std::min(std::max(p, static_cast<T>(kProbClip)), T(1)));
  }
  return loss / static_cast<T>(probs.rows);
}

// Lowest class id wins ties.
template <class T>
int argmax_class(const T* probs, int classes) {
  int best = 0;
  for (int j = 1; j < classes; ++j)
    if (probs[j] > probs[best]) best = j;
  return best;
}

}  // namespace mpar

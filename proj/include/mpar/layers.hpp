#pragma once

#include <cmath>
#include <memory>

#include "mpar/model_spec.hpp"
#include "mpar/rng.hpp"
#include "mpar/tensor.hpp"

namespace mpar {

template <class T>
struct LayerCache {
  std::vector<Mat<T>> m;
};

template <class T>
void apply_activation(Mat<T>& m, Activation a) {
  switch (a) {
    case Activation::Linear:
      return;
    case Activation::Relu:
      for (T& v : m.d)
        if (v < T(0)) v = T(0);
      return;
    case Activation::Tanh:
      for (T& v : m.d) v = std::tanh(v);
      return;
  }
}

// dz = dy * act'(z), expressed through the activation output y.
template <class T>
void activation_backward(Mat<T>& dz, const Mat<T>& y, Activation a) {
  switch (a) {
    case Activation::Linear:
      return;
    case Activation::Relu:
      for (int64_t i = 0; i < dz.size(); ++i)
        if (y.d[i] <= T(0)) dz.d[i] = T(0);
      return;
    case Activation::Tanh:
      for (int64_t i = 0; i < dz.size(); ++i) dz.d[i] *= T(1) - y.d[i] * y.d[i];
      return;
  }
}

template <class T>
void glorot_uniform(Mat<T>& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (T& v : w.d) v = static_cast<T>(uniform(rng, -limit, limit));
}

// Batches flow through layers as (B, t*f) mats; x and y are owned by the
// model's workspace, so backward receives them again alongside the cache.
template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual void build(SeqDims in, Rng& rng) = 0;
  virtual SeqDims in_dims() const = 0;
  virtual SeqDims out_dims() const = 0;
  virtual std::vector<Mat<T>*> params() = 0;
  virtual std::vector<const Mat<T>*> params() const = 0;
  virtual void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>& cache) const = 0;
  virtual void backward(const Mat<T>& x, const Mat<T>& y, const Mat<T>& dy,
                        const LayerCache<T>& cache, Mat<T>& dx,
                        std::vector<Mat<T>*> grads) const = 0;
};

namespace detail {

// Shared core of Dense / TimeDistributedDense: rows-many independent samples.
template <class T>
void dense_forward(const T* x, int rows, int f_in, const Mat<T>& w, const Mat<T>& b, Mat<T>& z) {
  matmul_nn(x, w.d.data(), z.d.data(), rows, f_in, w.cols);
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* zi = z.row(static_cast<int>(i));
      for (int j = 0; j < w.cols; ++j) zi[j] += b.d[j];
    }
  });
}

template <class T>
void dense_backward(const T* x, const T* dz, int rows, int f_in, const Mat<T>& w, Mat<T>& dw,
                    Mat<T>& db, T* dx) {
  matmul_tn(x, dz, dw.d.data(), rows, f_in, w.cols, true);
  colsum(dz, db.d.data(), rows, w.cols, true);
  if (dx) matmul_nt(dz, w.d.data(), dx, rows, w.cols, f_in);
}

}  // namespace detail

template <class T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(int units, Activation act, bool time_distributed)
      : units_(units), act_(act), time_distributed_(time_distributed) {}

  void build(SeqDims in, Rng& rng) override {
    if (time_distributed_ && in.t == 0)
      raise(Err::InvalidSpec, "time-distributed dense needs a sequence input");
    if (!time_distributed_ && in.t != 0)
      raise(Err::InvalidSpec, "dense needs a flat input; flatten first");
    in_ = in;
    out_ = time_distributed_ ? SeqDims{in.t, units_} : SeqDims{0, units_};
    w_.resize(in.f, units_);
    b_.resize(1, units_);
    glorot_uniform(w_, in.f, units_, rng);
  }

  SeqDims in_dims() const override { return in_; }
  SeqDims out_dims() const override { return out_; }
  std::vector<Mat<T>*> params() override { return {&w_, &b_}; }
  std::vector<const Mat<T>*> params() const override { return {&w_, &b_}; }

  void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>&) const override {
    const int rows = x.rows * std::max(1, in_.t);
    y.resize(x.rows, std::max(1, out_.t) * units_);
    // (B, T*F) and (B*T, F) share one layout, so both cases are one matmul
    Mat<T> z;
    z.rows = rows;
    z.cols = units_;
    z.d.swap(y.d);
    detail::dense_forward(x.d.data(), rows, in_.f, w_, b_, z);
    apply_activation(z, act_);
    y.d.swap(z.d);
  }

  void backward(const Mat<T>& x, const Mat<T>& y, const Mat<T>& dy, const LayerCache<T>&,
                Mat<T>& dx, std::vector<Mat<T>*> grads) const override {
    const int rows = x.rows * std::max(1, in_.t);
    Mat<T> dz = dy;
    activation_backward(dz, y, act_);
    dx.resize(x.rows, x.cols);
    detail::dense_backward(x.d.data(), dz.d.data(), rows, in_.f, w_, *grads[0], *grads[1],
                           dx.d.data());
  }

 private:
  int units_;
  Activation act_;
  bool time_distributed_;
  SeqDims in_, out_;
  Mat<T> w_, b_;
};

template <class T>
class Conv1dLayer final : public Layer<T> {
 public:
  Conv1dLayer(int filters, int kernel, int stride, Padding padding, Activation act)
      : filters_(filters), kernel_(kernel), stride_(stride), padding_(padding), act_(act) {}

  void build(SeqDims in, Rng& rng) override {
    if (in.t == 0) raise(Err::InvalidSpec, "conv1d needs a sequence input");
    in_ = in;
    t_out_ = (in.t + stride_ - 1) / stride_;  // ceil(T/s) for both padding modes
    out_ = SeqDims{t_out_, filters_};
    w_.resize(kernel_ * in.f, filters_);
    b_.resize(1, filters_);
    glorot_uniform(w_, kernel_ * in.f, kernel_ * filters_, rng);
    if (padding_ == Padding::Causal) {
      pad_left_ = kernel_ - 1;
    } else {
      const int pad_total = std::max(0, (t_out_ - 1) * stride_ + kernel_ - in.t);
      pad_left_ = pad_total / 2;
    }
  }

  SeqDims in_dims() const override { return in_; }
  SeqDims out_dims() const override { return out_; }
  std::vector<Mat<T>*> params() override { return {&w_, &b_}; }
  std::vector<const Mat<T>*> params() const override { return {&w_, &b_}; }

  void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>& cache) const override {
    const int B = x.rows;
    cache.m.resize(1);
    Mat<T>& patches = cache.m[0];  // (B*T', kernel*F); zero-padded taps stay zero
    patches.resize(B * t_out_, kernel_ * in_.f);
    parallel_for(B, [&](int64_t lo, int64_t hi) {
      for (int64_t b = lo; b < hi; ++b) {
        const T* xb = x.row(static_cast<int>(b));
        for (int j = 0; j < t_out_; ++j) {
          T* p = patches.row(static_cast<int>(b) * t_out_ + j);
          for (int u = 0; u < kernel_; ++u) {
            const int ti = j * stride_ + u - pad_left_;
            if (ti < 0 || ti >= in_.t) continue;
            const T* src = xb + static_cast<int64_t>(ti) * in_.f;
            T* dst = p + static_cast<int64_t>(u) * in_.f;
            for (int f = 0; f < in_.f; ++f) dst[f] = src[f];
          }
        }
      }
    });
    y.resize(B, t_out_ * filters_);
    Mat<T> z;
    z.rows = B * t_out_;
    z.cols = filters_;
    z.d.swap(y.d);
    detail::dense_forward(patches.d.data(), B * t_out_, kernel_ * in_.f, w_, b_, z);
    apply_activation(z, act_);
    y.d.swap(z.d);
  }

  void backward(const Mat<T>& x, const Mat<T>& y, const Mat<T>& dy, const LayerCache<T>& cache,
                Mat<T>& dx, std::vector<Mat<T>*> grads) const override {
    const int B = x.rows;
    const Mat<T>& patches = cache.m[0];
    Mat<T> dz = dy;
    activation_backward(dz, y, act_);
    matmul_tn(patches.d.data(), dz.d.data(), grads[0]->d.data(), B * t_out_, kernel_ * in_.f,
              filters_, true);
    colsum(dz.d.data(), grads[1]->d.data(), B * t_out_, filters_, true);
    Mat<T> dpatches(B * t_out_, kernel_ * in_.f);
    matmul_nt(dz.d.data(), w_.d.data(), dpatches.d.data(), B * t_out_, filters_, kernel_ * in_.f);
    dx.resize(B, x.cols);
    parallel_for(B, [&](int64_t lo, int64_t hi) {
      for (int64_t b = lo; b < hi; ++b) {
        T* dxb = dx.row(static_cast<int>(b));
        for (int j = 0; j < t_out_; ++j) {
          const T* p = dpatches.row(static_cast<int>(b) * t_out_ + j);
          for (int u = 0; u < kernel_; ++u) {
            const int ti = j * stride_ + u - pad_left_;
            if (ti < 0 || ti >= in_.t) continue;
            T* dst = dxb + static_cast<int64_t>(ti) * in_.f;
            const T* src = p + static_cast<int64_t>(u) * in_.f;
            for (int f = 0; f < in_.f; ++f) dst[f] += src[f];
          }
        }
      }
    });
  }

 private:
  int filters_, kernel_, stride_;
  Padding padding_;
  Activation act_;
  SeqDims in_, out_;
  int t_out_ = 0, pad_left_ = 0;
  Mat<T> w_, b_;
};

template <class T>
class LstmLayer final : public Layer<T> {
 public:
  LstmLayer(int units, bool return_sequences)
      : units_(units), return_sequences_(return_sequences) {}

  void build(SeqDims in, Rng& rng) override {
    if (in.t == 0) raise(Err::InvalidSpec, "lstm needs a sequence input");
    in_ = in;
    out_ = return_sequences_ ? SeqDims{in.t, units_} : SeqDims{0, units_};
    wx_.resize(in.f, 4 * units_);
    wh_.resize(units_, 4 * units_);
    b_.resize(1, 4 * units_);
    glorot_uniform(wx_, in.f, 4 * units_, rng);
    glorot_uniform(wh_, units_, 4 * units_, rng);
    // forget-gate bias starts at 1
    for (int j = units_; j < 2 * units_; ++j) b_.d[j] = T(1);
  }

  SeqDims in_dims() const override { return in_; }
  SeqDims out_dims() const override { return out_; }
  std::vector<Mat<T>*> params() override { return {&wx_, &wh_, &b_}; }
  std::vector<const Mat<T>*> params() const override { return {&wx_, &wh_, &b_}; }

  // cache: gates (B, T*4U) post-activation in [i f g o] order, cells (B, T*U),
  // tanh(cells) (B, T*U), hidden states (B, T*U)
  void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>& cache) const override {
    const int B = x.rows;
    const int U = units_;
    const int T_ = in_.t;
    cache.m.assign(4, Mat<T>());
    Mat<T>& gates = cache.m[0];
    Mat<T>& cells = cache.m[1];
    Mat<T>& tanhc = cache.m[2];
    Mat<T>& hidden = cache.m[3];
    gates.resize(B, T_ * 4 * U);
    cells.resize(B, T_ * U);
    tanhc.resize(B, T_ * U);
    hidden.resize(B, T_ * U);

    Mat<T> xt(B, in_.f), ht(B, U), zt(B, 4 * U);
    for (int t = 0; t < T_; ++t) {
      for (int b = 0; b < B; ++b) {
        const T* src = x.row(b) + static_cast<int64_t>(t) * in_.f;
        std::copy(src, src + in_.f, xt.row(b));
      }
      matmul_nn(xt.d.data(), wx_.d.data(), zt.d.data(), B, in_.f, 4 * U);
      if (t > 0) matmul_nn(ht.d.data(), wh_.d.data(), zt.d.data(), B, U, 4 * U, true);
      for (int b = 0; b < B; ++b) {
        T* z = zt.row(b);
        T* g = gates.row(b) + static_cast<int64_t>(t) * 4 * U;
        T* c = cells.row(b) + static_cast<int64_t>(t) * U;
        T* tc = tanhc.row(b) + static_cast<int64_t>(t) * U;
        T* h = hidden.row(b) + static_cast<int64_t>(t) * U;
        const T* c_prev = t > 0 ? cells.row(b) + static_cast<int64_t>(t - 1) * U : nullptr;
        for (int j = 0; j < U; ++j) {
          const T zi = z[j] + b_.d[j];
          const T zf = z[U + j] + b_.d[U + j];
          const T zg = z[2 * U + j] + b_.d[2 * U + j];
          const T zo = z[3 * U + j] + b_.d[3 * U + j];
          const T gi = T(1) / (T(1) + std::exp(-zi));
          const T gf = T(1) / (T(1) + std::exp(-zf));
          const T gg = std::tanh(zg);
          const T go = T(1) / (T(1) + std::exp(-zo));
          const T cp = c_prev ? c_prev[j] : T(0);
          const T ct = gf * cp + gi * gg;
          g[j] = gi;
          g[U + j] = gf;
          g[2 * U + j] = gg;
          g[3 * U + j] = go;
          c[j] = ct;
          tc[j] = std::tanh(ct);
          h[j] = go * tc[j];
        }
        std::copy(h, h + U, ht.row(b));
      }
    }
    if (return_sequences_) {
      y = hidden;
    } else {
      y.resize(B, U);
      for (int b = 0; b < B; ++b) {
        const T* h = hidden.row(b) + static_cast<int64_t>(T_ - 1) * U;
        std::copy(h, h + U, y.row(b));
      }
    }
  }

  void backward(const Mat<T>& x, const Mat<T>&, const Mat<T>& dy, const LayerCache<T>& cache,
                Mat<T>& dx, std::vector<Mat<T>*> grads) const override {
    const int B = x.rows;
    const int U = units_;
    const int T_ = in_.t;
    const Mat<T>& gates = cache.m[0];
    const Mat<T>& cells = cache.m[1];
    const Mat<T>& tanhc = cache.m[2];
    const Mat<T>& hidden = cache.m[3];
    Mat<T>& dwx = *grads[0];
    Mat<T>& dwh = *grads[1];
    Mat<T>& db = *grads[2];

    dx.resize(B, x.cols);
    Mat<T> dh(B, U), dc(B, U), dz(B, 4 * U), xt(B, in_.f), hprev(B, U), dxt(B, in_.f);
    for (int t = T_ - 1; t >= 0; --t) {
      // dh accumulates the recurrent term plus this step's output gradient
      if (return_sequences_) {
        for (int b = 0; b < B; ++b) {
          const T* src = dy.row(b) + static_cast<int64_t>(t) * U;
          T* dst = dh.row(b);
          for (int j = 0; j < U; ++j) dst[j] += src[j];
        }
      } else if (t == T_ - 1) {
        for (int b = 0; b < B; ++b) std::copy(dy.row(b), dy.row(b) + U, dh.row(b));
      }
      for (int b = 0; b < B; ++b) {
        const T* g = gates.row(b) + static_cast<int64_t>(t) * 4 * U;
        const T* tc = tanhc.row(b) + static_cast<int64_t>(t) * U;
        const T* c_prev = t > 0 ? cells.row(b) + static_cast<int64_t>(t - 1) * U : nullptr;
        T* dhb = dh.row(b);
        T* dcb = dc.row(b);
        T* dzb = dz.row(b);
        for (int j = 0; j < U; ++j) {
          const T gi = g[j], gf = g[U + j], gg = g[2 * U + j], go = g[3 * U + j];
          const T dout = dhb[j] * tc[j];
          const T dct = dcb[j] + dhb[j] * go * (T(1) - tc[j] * tc[j]);
          const T din = dct * gg;
          const T dg = dct * gi;
          const T df = c_prev ? dct * c_prev[j] : T(0);
          dcb[j] = dct * gf;  // becomes dc_next for t-1
          dzb[j] = din * gi * (T(1) - gi);
          dzb[U + j] = df * gf * (T(1) - gf);
          dzb[2 * U + j] = dg * (T(1) - gg * gg);
          dzb[3 * U + j] = dout * go * (T(1) - go);
        }
      }
      for (int b = 0; b < B; ++b) {
        const T* src = x.row(b) + static_cast<int64_t>(t) * in_.f;
        std::copy(src, src + in_.f, xt.row(b));
        if (t > 0) {
          const T* h = hidden.row(b) + static_cast<int64_t>(t - 1) * U;
          std::copy(h, h + U, hprev.row(b));
        }
      }
      matmul_tn(xt.d.data(), dz.d.data(), dwx.d.data(), B, in_.f, 4 * U, true);
      if (t > 0) matmul_tn(hprev.d.data(), dz.d.data(), dwh.d.data(), B, U, 4 * U, true);
      colsum(dz.d.data(), db.d.data(), B, 4 * U, true);
      matmul_nt(dz.d.data(), wx_.d.data(), dxt.d.data(), B, 4 * U, in_.f);
      for (int b = 0; b < B; ++b) {
        T* dst = dx.row(b) + static_cast<int64_t>(t) * in_.f;
        const T* src = dxt.row(b);
        for (int f = 0; f < in_.f; ++f) dst[f] = src[f];
      }
      // dh for t-1 comes purely through Wh
      matmul_nt(dz.d.data(), wh_.d.data(), dh.d.data(), B, 4 * U, U);
    }
  }

 private:
  int units_;
  bool return_sequences_;
  SeqDims in_, out_;
  Mat<T> wx_, wh_, b_;
};

template <class T>
class FlattenLayer final : public Layer<T> {
 public:
  void build(SeqDims in, Rng&) override {
    if (in.t == 0) raise(Err::InvalidSpec, "flatten needs a sequence input");
    in_ = in;
    out_ = SeqDims{0, in.t * in.f};
  }
  SeqDims in_dims() const override { return in_; }
  SeqDims out_dims() const override { return out_; }
  std::vector<Mat<T>*> params() override { return {}; }
  std::vector<const Mat<T>*> params() const override { return {}; }
  void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>&) const override { y = x; }
  void backward(const Mat<T>&, const Mat<T>&, const Mat<T>& dy, const LayerCache<T>&, Mat<T>& dx,
                std::vector<Mat<T>*>) const override {
    dx = dy;
  }

 private:
  SeqDims in_, out_;
};

template <class T>
class AdaptiveAvgPoolLayer final : public Layer<T> {
 public:
  explicit AdaptiveAvgPoolLayer(int sections) : sections_(sections) {}

  void build(SeqDims in, Rng&) override {
    if (in.t == 0) raise(Err::InvalidSpec, "pool needs a sequence input");
    in_ = in;
    eff_sections_ = std::min(sections_, in.t);  // clamp when sections > T
    out_ = SeqDims{eff_sections_, in.f};
  }
  SeqDims in_dims() const override { return in_; }
  SeqDims out_dims() const override { return out_; }
  std::vector<Mat<T>*> params() override { return {}; }
  std::vector<const Mat<T>*> params() const override { return {}; }

  int span_begin(int i) const {
    return static_cast<int>(static_cast<int64_t>(i) * in_.t / eff_sections_);
  }

  void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>&) const override {
    const int B = x.rows;
    y.resize(B, eff_sections_ * in_.f);
    for (int b = 0; b < B; ++b) {
      const T* xb = x.row(b);
      T* yb = y.row(b);
      for (int i = 0; i < eff_sections_; ++i) {
        const int lo = span_begin(i), hi = span_begin(i + 1);
        for (int f = 0; f < in_.f; ++f) {
          T acc = T(0);
          for (int t = lo; t < hi; ++t) acc += xb[static_cast<int64_t>(t) * in_.f + f];
          yb[static_cast<int64_t>(i) * in_.f + f] = acc / static_cast<T>(hi - lo);
        }
      }
    }
  }

  void backward(const Mat<T>& x, const Mat<T>&, const Mat<T>& dy, const LayerCache<T>&, Mat<T>& dx,
                std::vector<Mat<T>*>) const override {
    const int B = x.rows;
    dx.resize(B, x.cols);
    for (int b = 0; b < B; ++b) {
      const T* dyb = dy.row(b);
      T* dxb = dx.row(b);
      for (int i = 0; i < eff_sections_; ++i) {
        const int lo = span_begin(i), hi = span_begin(i + 1);
        const T inv = T(1) / static_cast<T>(hi - lo);
        for (int f = 0; f < in_.f; ++f) {
          const T g = dyb[static_cast<int64_t>(i) * in_.f + f] * inv;
          for (int t = lo; t < hi; ++t) dxb[static_cast<int64_t>(t) * in_.f + f] += g;
        }
      }
    }
  }

 private:
  int sections_;
  int eff_sections_ = 1;
  SeqDims in_, out_;
};

// Linear head into `classes` logits followed by a softmax. The cross-entropy
// gradient is injected at the logits by the model's backward pass.
template <class T>
class SoftmaxOutputLayer final : public Layer<T> {
 public:
  explicit SoftmaxOutputLayer(int classes) : classes_(classes) {}

  void build(SeqDims in, Rng& rng) override {
    if (in.t != 0) raise(Err::InvalidSpec, "softmax output needs a flat input");
    in_ = in;
    out_ = SeqDims{0, classes_};
    w_.resize(in.f, classes_);
    b_.resize(1, classes_);
    glorot_uniform(w_, in.f, classes_, rng);
  }
  SeqDims in_dims() const override { return in_; }
  SeqDims out_dims() const override { return out_; }
  std::vector<Mat<T>*> params() override { return {&w_, &b_}; }
  std::vector<const Mat<T>*> params() const override { return {&w_, &b_}; }

  void forward(const Mat<T>& x, Mat<T>& y, LayerCache<T>&) const override {
    y.resize(x.rows, classes_);
    detail::dense_forward(x.d.data(), x.rows, in_.f, w_, b_, y);
    for (int b = 0; b < x.rows; ++b) {
      T* p = y.row(b);
      T mx = p[0];
      for (int j = 1; j < classes_; ++j) mx = std::max(mx, p[j]);
      T sum = T(0);
      for (int j = 0; j < classes_; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      for (int j = 0; j < classes_; ++j) p[j] /= sum;
    }
  }

  // dy here is the gradient at the LOGITS, not at the probabilities.
  void backward(const Mat<T>& x, const Mat<T>&, const Mat<T>& dlogits, const LayerCache<T>&,
                Mat<T>& dx, std::vector<Mat<T>*> grads) const override {
    dx.resize(x.rows, x.cols);
    detail::dense_backward(x.d.data(), dlogits.d.data(), x.rows, in_.f, w_, *grads[0], *grads[1],
                           dx.d.data());
  }

  int classes() const { return classes_; }

 private:
  int classes_;
  SeqDims in_, out_;
  Mat<T> w_, b_;
};

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
  using namespace layer_spec;
  if (const auto* d = std::get_if<Dense>(&spec))
    return std::make_unique<DenseLayer<T>>(d->units, d->activation, false);
  if (const auto* d = std::get_if<TimeDistributedDense>(&spec))
    return std::make_unique<DenseLayer<T>>(d->units, d->activation, true);
  if (const auto* c = std::get_if<Conv1d>(&spec))
    return std::make_unique<Conv1dLayer<T>>(c->filters, c->kernel, c->stride, c->padding,
                                            c->activation);
  if (const auto* l = std::get_if<Lstm>(&spec))
    return std::make_unique<LstmLayer<T>>(l->units, l->return_sequences);
  if (std::get_if<Flatten>(&spec)) return std::make_unique<FlattenLayer<T>>();
  if (const auto* p = std::get_if<AdaptiveAvgPool>(&spec))
    return std::make_unique<AdaptiveAvgPoolLayer<T>>(p->sections);
  if (const auto* s = std::get_if<SoftmaxOutput>(&spec))
    return std::make_unique<SoftmaxOutputLayer<T>>(s->classes);
  raise(Err::InvalidSpec, "unknown layer spec");
}

}  // namespace mpar

#include "mpar/model.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mpar/model_io.hpp"
#include "mpar/train.hpp"

using namespace mpar;

namespace {

Mat<float> random_batch(int rows, int cols, uint64_t seed) {
  Rng rng = make_rng(seed);
  Mat<float> x(rows, cols);
  for (float& v : x.d) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("all-zero weights produce the uniform distribution") {
  ModelSpec spec = make_td_dense_spec(3, 4, {5}, {});
  Model model = build_model<float>(spec, 1);
  for (Mat<float>* p : model.params()) p->zero();
  Mat<float> x = random_batch(4, 12, 2);
  NetState<float> ws;
  const Mat<float>& probs = model.forward(x, ws);
  for (int b = 0; b < probs.rows; ++b)
    for (int j = 0; j < probs.cols; ++j) CHECK(probs.at(b, j) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one for random weights in every family") {
  std::vector<ModelSpec> specs = {
      make_td_dense_spec(6, 7, {9, 4}, {11}),
      make_lstm_spec(6, 7, {12}),
      make_conv_spec(12, 7, {{8, 3, 2, Padding::Same}, {16, 3, 1, Padding::Causal}}, 3),
  };
  for (uint64_t seed = 0; seed < 5; ++seed) {
    for (const ModelSpec& spec : specs) {
      Model model = build_model<float>(spec, seed);
      Mat<float> x = random_batch(8, spec.window * spec.features, seed + 50);
      NetState<float> ws;
      const Mat<float>& probs = model.forward(x, ws);
      for (int b = 0; b < probs.rows; ++b) {
        float sum = 0;
        for (int j = 0; j < probs.cols; ++j) sum += probs.at(b, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("conv output length is ceil(T/stride) for both paddings") {
  for (Padding pad : {Padding::Same, Padding::Causal}) {
    ModelSpec spec = make_conv_spec(104, 6, {{4, 3, 2, pad}}, 0);
    std::vector<SeqDims> dims = plan_dims(spec);
    CHECK(dims[0].t == 52);
    for (int stride = 1; stride <= 5; ++stride) {
      ModelSpec s2 = make_conv_spec(17, 3, {{4, 4, stride, pad}}, 0);
      CHECK(plan_dims(s2)[0].t == (17 + stride - 1) / stride);
    }
  }
}

TEST_CASE("causal conv output at time t ignores inputs after t") {
  layer_spec::Conv1d cs{5, 3, 1, Padding::Causal, Activation::Relu};
  Conv1dLayer<float> layer(cs.filters, cs.kernel, cs.stride, cs.padding, cs.activation);
  Rng rng = make_rng(9);
  layer.build(SeqDims{10, 4}, rng);
  Mat<float> x = random_batch(2, 40, 10);
  Mat<float> y1, y2;
  LayerCache<float> cache;
  layer.forward(x, y1, cache);
  const int t = 6;
  for (int f = 0; f < 4; ++f) x.at(1, (t + 1) * 4 + f) += 0.37f;
  layer.forward(x, y2, cache);
  for (int j = 0; j <= t; ++j)
    for (int k = 0; k < 5; ++k) CHECK(y1.at(1, j * 5 + k) == y2.at(1, j * 5 + k));
  // and something after t did change
  bool changed = false;
  for (int j = t + 1; j < 10; ++j)
    for (int k = 0; k < 5; ++k) changed |= y1.at(1, j * 5 + k) != y2.at(1, j * 5 + k);
  CHECK(changed);
}

TEST_CASE("cross entropy: perfect, uniform, and clipped predictions") {
  Mat<float> perfect(1, 10);
  perfect.at(0, 2) = 1.0f;
  CHECK(cross_entropy(perfect, {2}) == doctest::Approx(0.0));
  Mat<float> u(1, 10);
  for (int j = 0; j < 10; ++j) u.at(0, j) = 0.1f;
  CHECK(cross_entropy(u, {4}) == doctest::Approx(2.302585).epsilon(1e-5));
  Mat<float> z(1, 10);
  z.at(0, 1) = 1.0f;
  CHECK(cross_entropy(z, {0}) == doctest::Approx(16.11809565).epsilon(1e-5));
}

TEST_CASE("output-layer bias gradient equals probabilities minus one-hot") {
  ModelSpec spec = make_td_dense_spec(2, 3, {}, {4});
  Model model = build_model<float>(spec, 3);
  Mat<float> x = random_batch(1, 6, 4);
  NetState<float> ws;
  std::vector<Mat<float>> grads;
  model.backward(x, {7}, ws, grads);
  const Mat<float>& probs = ws.acts.back();
  const Mat<float>& head_bias_grad = grads.back();
  for (int j = 0; j < 10; ++j) {
    const float expect = probs.at(0, j) - (j == 7 ? 1.0f : 0.0f);
    CHECK(head_bias_grad.at(0, j) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("adam first step magnitude is close to the learning rate") {
  Mat<float> p(1, 4);
  std::vector<Mat<float>> g(1, Mat<float>(1, 4));
  g[0].d = {0.001f, -0.5f, 2.0f, -0.001f};
  std::vector<Mat<float>*> params = {&p};
  AdamState<float> st = AdamState<float>::init(params);
  const double lr = 0.01;
  adam_step(params, g, st, lr, AdamConfig{});
  CHECK(st.t == 1);
  for (int j = 0; j < 4; ++j) {
    const double step = std::abs(p.d[j]);
    CHECK(step <= lr * 1.0000001);
    CHECK(step >= 0.999 * lr);
  }
}

TEST_CASE("adam leaves parameters alone for zero gradient and increments t") {
  Mat<float> p(1, 3);
  p.d = {1.0f, -2.0f, 3.0f};
  std::vector<Mat<float>> g(1, Mat<float>(1, 3));
  std::vector<Mat<float>*> params = {&p};
  AdamState<float> st = AdamState<float>::init(params);
  adam_step(params, g, st, 0.1, AdamConfig{});
  adam_step(params, g, st, 0.1, AdamConfig{});
  CHECK(st.t == 2);
  CHECK(p.d[0] == 1.0f);
  CHECK(p.d[1] == -2.0f);
  CHECK(p.d[2] == 3.0f);
}

TEST_CASE("plateau schedule fires after patience non-improving epochs") {
  PlateauConfig cfg;
  std::vector<double> flat(11, 1.0);
  CHECK(reduce_lr_on_plateau({flat.begin(), flat.begin() + 10}, cfg, 1e-3) ==
        doctest::Approx(1e-3));
  CHECK(reduce_lr_on_plateau(flat, cfg, 1e-3) == doctest::Approx(1e-4));

  std::vector<double> improving;
  for (int i = 0; i < 40; ++i) improving.push_back(1.0 - 0.01 * i);
  CHECK(reduce_lr_on_plateau(improving, cfg, 1e-3) == doctest::Approx(1e-3));

  std::vector<double> long_flat(50, 1.0);
  CHECK(reduce_lr_on_plateau(long_flat, cfg, 5e-7) == doctest::Approx(cfg.min_lr));
}

TEST_CASE("same seed builds bit-identical parameters") {
  ModelSpec spec = make_lstm_spec(4, 5, {7});
  Model a = build_model<float>(spec, 42);
  Model b = build_model<float>(spec, 42);
  Model c = build_model<float>(spec, 43);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  bool differs = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->d == pb[i]->d);
    differs |= pa[i]->d != pc[i]->d;
  }
  CHECK(differs);
}

TEST_CASE("lstm biases start at zero except the forget gate") {
  ModelSpec spec = make_lstm_spec(3, 4, {6});
  Model m = build_model<float>(spec, 1);
  const Mat<float>* b = m.params()[2];  // wx, wh, b
  REQUIRE(b->size() == 24);
  for (int j = 0; j < 6; ++j) CHECK(b->d[j] == 0.0f);
  for (int j = 6; j < 12; ++j) CHECK(b->d[j] == 1.0f);
  for (int j = 12; j < 24; ++j) CHECK(b->d[j] == 0.0f);
}

TEST_CASE("dense layer parameter arithmetic: 4 inputs x 3 units = 15") {
  DenseLayer<float> layer(3, Activation::Relu, false);
  Rng rng = make_rng(0);
  layer.build(SeqDims{0, 4}, rng);
  int64_t n = 0;
  for (const Mat<float>* p : layer.params()) n += p->size();
  CHECK(n == 15);
}

TEST_CASE("the published architecture builds with a compliant parameter count") {
  // 11 time-distributed layers of 188, 2 dense layers of 457, window 104,
  // full two-hand feature width 126
  std::vector<int> td(11, 188);
  ModelSpec spec = make_td_dense_spec(104, 126, td, {457, 457});
  Model model = build_model<float>(spec, 0);
  const int64_t count = model.param_count();
  CHECK(count == 9528803);
  CHECK(count == spec_param_count(spec));
  CHECK(count >= 19000);
  CHECK(count <= 10000000);
}

TEST_CASE("parameter-count formula equals brute force for random specs") {
  Rng rng = make_rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = static_cast<int>(uniform_int(rng, 2, 12));
    const int f = static_cast<int>(uniform_int(rng, 2, 12));
    ModelSpec spec;
    switch (uniform_int(rng, 0, 2)) {
      case 0: {
        std::vector<int> td(uniform_int(rng, 0, 3), 0);
        for (int& u : td) u = static_cast<int>(uniform_int(rng, 1, 20));
        std::vector<int> dense(uniform_int(rng, 0, 3), 0);
        for (int& u : dense) u = static_cast<int>(uniform_int(rng, 1, 20));
        spec = make_td_dense_spec(w, f, td, dense);
        break;
      }
      case 1: {
        std::vector<int> units(uniform_int(rng, 1, 3), 0);
        for (int& u : units) u = static_cast<int>(uniform_int(rng, 1, 16));
        spec = make_lstm_spec(w, f, units);
        break;
      }
      default: {
        std::vector<ConvLayerDims> convs(uniform_int(rng, 1, 3));
        for (auto& c : convs) {
          c.filters = static_cast<int>(uniform_int(rng, 1, 12));
          c.kernel = static_cast<int>(uniform_int(rng, 1, 4));
          c.stride = static_cast<int>(uniform_int(rng, 1, 3));
          c.padding = bernoulli(rng, 0.5) ? Padding::Causal : Padding::Same;
        }
        spec = make_conv_spec(w, f, convs, static_cast<int>(uniform_int(rng, 0, 4)));
      }
    }
    Model m = build_model<float>(spec, trial);
    CHECK(m.param_count() == spec_param_count(spec));
  }
}

TEST_CASE("family bounds are enforced") {
  auto expect_invalid = [](const ModelSpec& spec) {
    try {
      validate_spec(spec);
      FAIL("expected InvalidSpec");
    } catch (const Error& e) {
      CHECK(e.code() == Err::InvalidSpec);
    }
  };
  expect_invalid(make_lstm_spec(4, 5, std::vector<int>(21, 8)));
  expect_invalid(make_lstm_spec(4, 5, {251}));
  expect_invalid(make_td_dense_spec(4, 5, {501}, {}));
  expect_invalid(make_conv_spec(4, 5, {{129, 3, 1, Padding::Same}}, 0));
  expect_invalid(make_conv_spec(4, 5, {{8, 3, 6, Padding::Same}}, 0));
  expect_invalid(make_conv_spec(4, 5, {{8, 3, 1, Padding::Same}}, 121));
  expect_invalid(make_conv_spec(4, 5, {}, 0));
  ModelSpec headless = make_td_dense_spec(4, 5, {8}, {});
  headless.layers.pop_back();
  expect_invalid(headless);
}

TEST_CASE("lstm output shapes follow return_sequences") {
  ModelSpec stacked = make_lstm_spec(6, 4, {8, 5});
  std::vector<SeqDims> dims = plan_dims(stacked);
  CHECK(dims[0].t == 6);
  CHECK(dims[0].f == 8);
  CHECK(dims[1].t == 0);
  CHECK(dims[1].f == 5);
  Model m = build_model<float>(stacked, 5);
  Mat<float> x = random_batch(3, 24, 6);
  NetState<float> ws;
  m.forward(x, ws);
  CHECK(ws.acts[1].rows == 3);
  CHECK(ws.acts[1].cols == 5);
}

TEST_CASE("adaptive pool clamps sections and averages spans") {
  AdaptiveAvgPoolLayer<float> pool(120);
  Rng rng = make_rng(0);
  pool.build(SeqDims{7, 2}, rng);
  CHECK(pool.out_dims().t == 7);  // clamped to T

  AdaptiveAvgPoolLayer<float> pool3(3);
  pool3.build(SeqDims{7, 1}, rng);
  Mat<float> x(1, 7);
  for (int t = 0; t < 7; ++t) x.d[t] = static_cast<float>(t);
  Mat<float> y;
  LayerCache<float> cache;
  pool3.forward(x, y, cache);
  REQUIRE(y.cols == 3);
  // spans [0,2) [2,4) [4,7)
  CHECK(y.d[0] == doctest::Approx(0.5f));
  CHECK(y.d[1] == doctest::Approx(2.5f));
  CHECK(y.d[2] == doctest::Approx(5.0f));
}

TEST_CASE("prediction breaks ties toward the lowest class id") {
  float uniform_probs[10];
  for (float& v : uniform_probs) v = 0.1f;
  CHECK(argmax_class(uniform_probs, 10) == 0);
  float last[10] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  CHECK(argmax_class(last, 10) == 9);
}

TEST_CASE("model container round-trips bit-exactly") {
  const std::string path = (std::filesystem::temp_directory_path() / "mpar_roundtrip.bin").string();
  ModelSpec spec = make_conv_spec(10, 6, {{4, 3, 2, Padding::Causal}}, 2);
  Model model = build_model<float>(spec, 11);
  model.manifest.fps = 15;
  model.manifest.window_len = 10;
  model.manifest.preprocess.normalize = NormalizeMode::PerSkeleton;
  save_model(model, path);
  Model back = load_model(path);
  CHECK(back.manifest.fps == 15);
  CHECK(back.manifest.preprocess.normalize == NormalizeMode::PerSkeleton);

  Mat<float> x = random_batch(2, 60, 12);
  NetState<float> ws1, ws2;
  const Mat<float>& p1 = model.forward(x, ws1);
  const Mat<float>& p2 = back.forward(x, ws2);
  CHECK(p1.d == p2.d);
  std::filesystem::remove(path);
}

TEST_CASE("container rejects bad magic, corruption, and future versions") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "mpar_bad.bin").string();
  ModelSpec spec = make_td_dense_spec(3, 4, {5}, {});
  Model model = build_model<float>(spec, 1);
  save_model(model, path);

  auto mutate = [&](size_t offset, char value) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(offset));
    f.put(value);
  };

  SUBCASE("wrong magic") {
    mutate(0, 'X');
    try {
      load_model(path);
      FAIL("expected CorruptContainer");
    } catch (const Error& e) {
      CHECK(e.code() == Err::CorruptContainer);
    }
  }
  SUBCASE("flipped weight byte") {
    const auto size = fs::file_size(path);
    std::ifstream f(path, std::ios::binary);
    std::vector<char> bytes(size);
    f.read(bytes.data(), static_cast<std::streamsize>(size));
    f.close();
    bytes[size - 1] = static_cast<char>(bytes[size - 1] ^ 0x40);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(size));
    out.close();
    try {
      load_model(path);
      FAIL("expected CorruptContainer");
    } catch (const Error& e) {
      CHECK(e.code() == Err::CorruptContainer);
    }
  }
  SUBCASE("future format version") {
    // rewrite with a bumped version field
    std::ifstream f(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    f.close();
    std::string text(bytes.begin(), bytes.end());
    const std::string needle = "\"format_version\":1";
    const size_t pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, needle.size(), "\"format_version\":9");
    std::ofstream out(path, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.close();
    try {
      load_model(path);
      FAIL("expected VersionMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Err::VersionMismatch);
    }
  }
  fs::remove(path);
}

TEST_CASE("causality holds through a stacked causal conv model") {
  ModelSpec spec =
      make_conv_spec(12, 3, {{6, 3, 1, Padding::Causal}, {4, 2, 1, Padding::Causal}}, 0);
  Model model = build_model<float>(spec, 21);
  Mat<float> x = random_batch(2, 36, 22);
  NetState<float> ws1, ws2;
  model.forward(x, ws1);
  const int t = 5;
  Mat<float> y = x;
  for (int f = 0; f < 3; ++f) y.at(0, (t + 1) * 3 + f) += 0.9f;
  model.forward(y, ws2);
  // both conv layers: outputs at times <= t are bitwise unchanged
  for (int layer = 0; layer < 2; ++layer) {
    const int filters = layer == 0 ? 6 : 4;
    for (int j = 0; j <= t; ++j)
      for (int k = 0; k < filters; ++k)
        CHECK(ws1.acts[layer].at(0, j * filters + k) == ws2.acts[layer].at(0, j * filters + k));
  }
}

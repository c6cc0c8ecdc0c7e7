#include "doctest.h"
#include "gradcheck_util.hpp"

using namespace mpar;
using namespace mpar::testutil;

TEST_CASE("analytic gradients match finite differences: td_dense family") {
  GradCheckResult res = gradient_check(gradcheck_td_dense_spec(), 3, 101);
  CHECK(res.params_checked > 500);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("analytic gradients match finite differences: lstm family") {
  GradCheckResult res = gradient_check(gradcheck_lstm_spec(), 3, 102);
  CHECK(res.params_checked > 400);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("analytic gradients match finite differences: conv1d family") {
  GradCheckResult res = gradient_check(gradcheck_conv_spec(), 3, 103);
  CHECK(res.params_checked > 500);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradients match finite differences with pooling and larger batch") {
  std::vector<ConvLayerDims> convs = {{4, 2, 1, Padding::Causal}, {8, 3, 1, Padding::Same}};
  ModelSpec spec = make_conv_spec(10, 3, convs, 4);
  GradCheckResult res = gradient_check(spec, 5, 104);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradients match finite differences for stacked lstm") {
  ModelSpec spec = make_lstm_spec(4, 3, {6, 5});
  GradCheckResult res = gradient_check(spec, 3, 105);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("flat batch loss has zero gradient, verified against the oracle") {
  // All-zero weights give uniform probabilities; with labels covering every
  // class equally, the mean logit gradients cancel.
  ModelSpec spec = make_td_dense_spec(3, 4, {6}, {});
  ModelT<double> model = build_model<double>(spec, 7);
  for (Mat<double>* p : model.params()) p->zero();

  const int batch = kNumClasses;
  Rng rng = make_rng(7, 3);
  Mat<double> x(batch, spec.window * spec.features);
  for (double& v : x.d) v = uniform(rng, -1.0, 1.0);
  std::vector<int> labels(batch);
  for (int i = 0; i < batch; ++i) labels[i] = i;

  NetState<double> ws;
  std::vector<Mat<double>> grads;
  model.backward(x, labels, ws, grads);
  for (const auto& g : grads)
    for (double v : g.d) CHECK(std::abs(v) < 1e-12);

  // central differences agree that the loss is locally flat
  auto loss_at = [&]() { return cross_entropy(model.forward(x, ws), labels); };
  const double h = 1e-5;
  std::vector<Mat<double>*> params = model.params();
  for (Mat<double>* p : params) {
    for (int64_t k = 0; k < p->size(); ++k) {
      const double orig = p->d[k];
      p->d[k] = orig + h;
      const double up = loss_at();
      p->d[k] = orig - h;
      const double down = loss_at();
      p->d[k] = orig;
      CHECK(std::abs((up - down) / (2 * h)) < 1e-8);
    }
  }
}

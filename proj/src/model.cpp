#include "mpar/model_spec.hpp"

#include <algorithm>

namespace mpar {

const char* family_name(Family f) {
  switch (f) {
    case Family::LSTM: return "lstm";
    case Family::TDDense: return "td_dense";
    case Family::Conv1d: return "conv1d";
  }
  return "td_dense";
}

Family parse_family(const std::string& s) {
  if (s == "lstm") return Family::LSTM;
  if (s == "td_dense") return Family::TDDense;
  if (s == "conv1d") return Family::Conv1d;
  raise(Err::ConfigError, "unknown family '" + s + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "relu";
}

Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  raise(Err::ConfigError, "unknown activation '" + s + "'");
}

const char* padding_name(Padding p) { return p == Padding::Causal ? "causal" : "same"; }

Padding parse_padding(const std::string& s) {
  if (s == "causal") return Padding::Causal;
  if (s == "same") return Padding::Same;
  raise(Err::ConfigError, "unknown padding '" + s + "'");
}

std::vector<SeqDims> plan_dims(const ModelSpec& spec) {
  if (spec.window < 1 || spec.features < 1)
    raise(Err::InvalidSpec, "input shape must be at least 1x1");
  std::vector<SeqDims> out;
  SeqDims cur{spec.window, spec.features};
  for (const LayerSpec& ls : spec.layers) {
    using namespace layer_spec;
    if (const auto* d = std::get_if<Dense>(&ls)) {
      if (cur.t != 0) raise(Err::InvalidSpec, "dense needs a flat input; flatten first");
      cur = {0, d->units};
    } else if (const auto* d = std::get_if<TimeDistributedDense>(&ls)) {
      if (cur.t == 0) raise(Err::InvalidSpec, "time-distributed dense needs a sequence input");
      cur = {cur.t, d->units};
    } else if (const auto* c = std::get_if<Conv1d>(&ls)) {
      if (cur.t == 0) raise(Err::InvalidSpec, "conv1d needs a sequence input");
      cur = {(cur.t + c->stride - 1) / c->stride, c->filters};
    } else if (const auto* l = std::get_if<Lstm>(&ls)) {
      if (cur.t == 0) raise(Err::InvalidSpec, "lstm needs a sequence input");
      cur = l->return_sequences ? SeqDims{cur.t, l->units} : SeqDims{0, l->units};
    } else if (std::get_if<Flatten>(&ls)) {
      if (cur.t == 0) raise(Err::InvalidSpec, "flatten needs a sequence input");
      cur = {0, cur.t * cur.f};
    } else if (const auto* p = std::get_if<AdaptiveAvgPool>(&ls)) {
      if (cur.t == 0) raise(Err::InvalidSpec, "pool needs a sequence input");
      cur = {std::min(p->sections, cur.t), cur.f};
    } else if (const auto* s = std::get_if<SoftmaxOutput>(&ls)) {
      if (cur.t != 0) raise(Err::InvalidSpec, "softmax output needs a flat input; flatten first");
      cur = {0, s->classes};
    }
    out.push_back(cur);
  }
  return out;
}

int64_t spec_param_count(const ModelSpec& spec) {
  int64_t n = 0;
  SeqDims cur{spec.window, spec.features};
  const std::vector<SeqDims> dims = plan_dims(spec);
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    using namespace layer_spec;
    const LayerSpec& ls = spec.layers[i];
    const int f_in = cur.f;
    if (const auto* d = std::get_if<Dense>(&ls)) {
      n += static_cast<int64_t>(f_in) * d->units + d->units;
    } else if (const auto* d = std::get_if<TimeDistributedDense>(&ls)) {
      n += static_cast<int64_t>(f_in) * d->units + d->units;
    } else if (const auto* c = std::get_if<Conv1d>(&ls)) {
      n += static_cast<int64_t>(c->kernel) * f_in * c->filters + c->filters;
    } else if (const auto* l = std::get_if<Lstm>(&ls)) {
      n += static_cast<int64_t>(f_in) * 4 * l->units +
           static_cast<int64_t>(l->units) * 4 * l->units + 4 * l->units;
    } else if (const auto* s = std::get_if<SoftmaxOutput>(&ls)) {
      n += static_cast<int64_t>(f_in) * s->classes + s->classes;
    }
    cur = dims[i];
  }
  return n;
}

namespace {

[[noreturn]] void bad_spec(const std::string& what) { raise(Err::InvalidSpec, what); }

void validate_lstm_family(const ModelSpec& spec) {
  using namespace layer_spec;
  const size_t n = spec.layers.size();
  if (n < 2) bad_spec("lstm family needs at least one lstm layer and a softmax output");
  int lstm_count = 0;
  for (size_t i = 0; i + 1 < n; ++i) {
    const auto* l = std::get_if<Lstm>(&spec.layers[i]);
    if (!l) bad_spec("lstm family allows only lstm layers before the softmax output");
    if (l->units < 1 || l->units > 250) bad_spec("lstm units must lie in 1..250");
    const bool is_last_lstm = i + 2 == n;
    if (l->return_sequences == is_last_lstm)
      bad_spec("stacked lstm layers must return sequences; the last must not");
    ++lstm_count;
  }
  if (lstm_count < 1 || lstm_count > 20) bad_spec("lstm family allows 1..20 lstm layers");
}

void validate_td_dense_family(const ModelSpec& spec) {
  using namespace layer_spec;
  size_t i = 0;
  int td = 0;
  while (i < spec.layers.size() && std::holds_alternative<TimeDistributedDense>(spec.layers[i])) {
    const auto& d = std::get<TimeDistributedDense>(spec.layers[i]);
    if (d.units < 1 || d.units > 500) bad_spec("time-distributed units must lie in 1..500");
    ++td;
    ++i;
  }
  if (td > 20) bad_spec("td_dense family allows at most 20 time-distributed layers");
  if (i >= spec.layers.size() || !std::holds_alternative<Flatten>(spec.layers[i]))
    bad_spec("td_dense family needs a flatten between the stacks");
  ++i;
  int dense = 0;
  while (i < spec.layers.size() && std::holds_alternative<Dense>(spec.layers[i])) {
    const auto& d = std::get<Dense>(spec.layers[i]);
    if (d.units < 1 || d.units > 500) bad_spec("dense units must lie in 1..500");
    ++dense;
    ++i;
  }
  if (dense > 20) bad_spec("td_dense family allows at most 20 dense layers");
  if (i + 1 != spec.layers.size()) bad_spec("td_dense family is td stack, flatten, dense stack, softmax");
}

void validate_conv_family(const ModelSpec& spec) {
  using namespace layer_spec;
  size_t i = 0;
  int convs = 0;
  while (i < spec.layers.size() && std::holds_alternative<Conv1d>(spec.layers[i])) {
    const auto& c = std::get<Conv1d>(spec.layers[i]);
    if (c.filters < 1 || c.filters > 128) bad_spec("conv filters must lie in 1..128");
    if (c.stride < 1 || c.stride > 5) bad_spec("conv stride must lie in 1..5");
    if (c.kernel < 1) bad_spec("conv kernel must be positive");
    ++convs;
    ++i;
  }
  if (convs < 1 || convs > 10) bad_spec("conv1d family allows 1..10 conv layers");
  if (i < spec.layers.size() && std::holds_alternative<AdaptiveAvgPool>(spec.layers[i])) {
    const auto& p = std::get<AdaptiveAvgPool>(spec.layers[i]);
    if (p.sections < 1 || p.sections > 120) bad_spec("pool sections must lie in 1..120");
    ++i;
  }
  if (i >= spec.layers.size() || !std::holds_alternative<Flatten>(spec.layers[i]))
    bad_spec("conv1d family needs a flatten before the softmax output");
  ++i;
  if (i + 1 != spec.layers.size()) bad_spec("conv1d family is convs, optional pool, flatten, softmax");
}

}  // namespace

void validate_spec(const ModelSpec& spec) {
  using namespace layer_spec;
  if (spec.layers.empty()) bad_spec("model has no layers");
  const auto* head = std::get_if<SoftmaxOutput>(&spec.layers.back());
  if (!head) bad_spec("every model must end in a softmax output");
  if (head->classes != kNumClasses)
    bad_spec("softmax output must have " + std::to_string(kNumClasses) + " classes");
  for (size_t i = 0; i + 1 < spec.layers.size(); ++i)
    if (std::holds_alternative<SoftmaxOutput>(spec.layers[i]))
      bad_spec("softmax output must be the final layer");
  switch (spec.family) {
    case Family::LSTM: validate_lstm_family(spec); break;
    case Family::TDDense: validate_td_dense_family(spec); break;
    case Family::Conv1d: validate_conv_family(spec); break;
  }
  plan_dims(spec);  // surfaces shape incompatibilities
}

ModelSpec make_td_dense_spec(int window, int features, const std::vector<int>& td_units,
                             const std::vector<int>& dense_units) {
  ModelSpec spec;
  spec.window = window;
  spec.features = features;
  spec.family = Family::TDDense;
  for (int u : td_units) spec.layers.push_back(layer_spec::TimeDistributedDense{u, Activation::Relu});
  spec.layers.push_back(layer_spec::Flatten{});
  for (int u : dense_units) spec.layers.push_back(layer_spec::Dense{u, Activation::Relu});
  spec.layers.push_back(layer_spec::SoftmaxOutput{});
  return spec;
}

ModelSpec make_lstm_spec(int window, int features, const std::vector<int>& lstm_units) {
  ModelSpec spec;
  spec.window = window;
  spec.features = features;
  spec.family = Family::LSTM;
  for (size_t i = 0; i < lstm_units.size(); ++i)
    spec.layers.push_back(layer_spec::Lstm{lstm_units[i], i + 1 < lstm_units.size()});
  spec.layers.push_back(layer_spec::SoftmaxOutput{});
  return spec;
}

ModelSpec make_conv_spec(int window, int features, const std::vector<ConvLayerDims>& convs,
                         int pool_sections) {
  ModelSpec spec;
  spec.window = window;
  spec.features = features;
  spec.family = Family::Conv1d;
  for (const ConvLayerDims& c : convs)
    spec.layers.push_back(layer_spec::Conv1d{c.filters, c.kernel, c.stride, c.padding,
                                             Activation::Relu});
  if (pool_sections > 0) spec.layers.push_back(layer_spec::AdaptiveAvgPool{pool_sections});
  spec.layers.push_back(layer_spec::Flatten{});
  spec.layers.push_back(layer_spec::SoftmaxOutput{});
  return spec;
}

}  // namespace mpar

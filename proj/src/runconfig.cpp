#include "mpar/runconfig.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "mpar/model_io.hpp"

namespace mpar {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known)
      raise(Err::ConfigError, "unknown key '" + it.key() + "' in " + where);
  }
}

ModelSpec model_from_config_json(const json& m, int window, int features) {
  reject_unknown_keys(m, {"family", "td_units", "dense_units", "lstm_units", "conv_layers",
                          "pool_sections"},
                      "model");
  const Family family = parse_family(m.at("family").get<std::string>());
  if (family == Family::TDDense) {
    std::vector<int> td = m.value("td_units", std::vector<int>{});
    std::vector<int> dense = m.value("dense_units", std::vector<int>{});
    return make_td_dense_spec(window, features, td, dense);
  }
  if (family == Family::LSTM) {
    std::vector<int> units = m.at("lstm_units").get<std::vector<int>>();
    return make_lstm_spec(window, features, units);
  }
  std::vector<ConvLayerDims> convs;
  for (const json& c : m.at("conv_layers")) {
    reject_unknown_keys(c, {"filters", "kernel", "stride", "padding"}, "model.conv_layers");
    ConvLayerDims dims;
    dims.filters = c.at("filters").get<int>();
    dims.kernel = c.at("kernel").get<int>();
    dims.stride = c.value("stride", 1);
    dims.padding = parse_padding(c.value("padding", std::string("causal")));
    convs.push_back(dims);
  }
  return make_conv_spec(window, features, convs, m.value("pool_sections", 0));
}

json model_to_config_json(const ModelSpec& spec) {
  json m;
  m["family"] = family_name(spec.family);
  using namespace layer_spec;
  if (spec.family == Family::TDDense) {
    std::vector<int> td, dense;
    for (const LayerSpec& ls : spec.layers) {
      if (const auto* d = std::get_if<TimeDistributedDense>(&ls)) td.push_back(d->units);
      if (const auto* d = std::get_if<Dense>(&ls)) dense.push_back(d->units);
    }
    m["td_units"] = td;
    m["dense_units"] = dense;
  } else if (spec.family == Family::LSTM) {
    std::vector<int> units;
    for (const LayerSpec& ls : spec.layers)
      if (const auto* l = std::get_if<Lstm>(&ls)) units.push_back(l->units);
    m["lstm_units"] = units;
  } else {
    json convs = json::array();
    int pool = 0;
    for (const LayerSpec& ls : spec.layers) {
      if (const auto* c = std::get_if<Conv1d>(&ls))
        convs.push_back({{"filters", c->filters},
                         {"kernel", c->kernel},
                         {"stride", c->stride},
                         {"padding", padding_name(c->padding)}});
      if (const auto* p = std::get_if<AdaptiveAvgPool>(&ls)) pool = p->sections;
    }
    m["conv_layers"] = convs;
    if (pool > 0) m["pool_sections"] = pool;
  }
  return m;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"data", "fps", "window", "hop", "eval_hop", "split_ratio",
                          "max_history_s", "seed", "preprocess", "model", "train"},
                      "run config");
  RunConfig cfg;
  cfg.data = j.value("data", "");
  cfg.settings.fps = j.value("fps", 30);
  cfg.settings.window = j.at("window").get<int>();
  cfg.settings.train_hop = j.value("hop", 1);
  cfg.settings.eval_hop = j.value("eval_hop", 1);
  cfg.settings.split_ratio = j.value("split_ratio", 0.8);
  if (j.contains("max_history_s") && !j["max_history_s"].is_null())
    cfg.settings.max_history_s = j["max_history_s"].get<double>();
  cfg.seed = j.value("seed", uint64_t{0});

  if (j.contains("preprocess")) {
    reject_unknown_keys(j["preprocess"], {"swap", "impute_constant", "reduce", "normalize",
                                          "epsilon"},
                        "preprocess");
    json p = j["preprocess"];
    PreprocessConfig defaults;
    p["swap"] = p.value("swap", defaults.swap_enabled);
    p["impute_constant"] = p.value("impute_constant", defaults.impute_constant);
    p["reduce"] = p.value("reduce", std::string(reduce_mode_name(defaults.reduce)));
    p["normalize"] = p.value("normalize", std::string(normalize_mode_name(defaults.normalize)));
    p["epsilon"] = p.value("epsilon", defaults.epsilon);
    cfg.settings.preprocess = preprocess_from_json(p);
  }

  const int features = feature_length(cfg.settings.preprocess.reduce);
  cfg.model = model_from_config_json(j.at("model"), cfg.settings.window, features);

  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown_keys(t, {"learning_rate", "epochs", "batch_size", "adam", "plateau"}, "train");
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    if (t.contains("adam")) {
      reject_unknown_keys(t["adam"], {"beta1", "beta2", "eps"}, "train.adam");
      cfg.train.adam.beta1 = t["adam"].value("beta1", cfg.train.adam.beta1);
      cfg.train.adam.beta2 = t["adam"].value("beta2", cfg.train.adam.beta2);
      cfg.train.adam.eps = t["adam"].value("eps", cfg.train.adam.eps);
    }
    if (t.contains("plateau")) {
      reject_unknown_keys(t["plateau"], {"factor", "patience", "min_delta", "min_lr"},
                          "train.plateau");
      cfg.train.plateau.factor = t["plateau"].value("factor", cfg.train.plateau.factor);
      cfg.train.plateau.patience = t["plateau"].value("patience", cfg.train.plateau.patience);
      cfg.train.plateau.min_delta = t["plateau"].value("min_delta", cfg.train.plateau.min_delta);
      cfg.train.plateau.min_lr = t["plateau"].value("min_lr", cfg.train.plateau.min_lr);
    }
  }
  cfg.train.seed = cfg.seed;
  validate_spec(cfg.model);
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  if (!cfg.data.empty()) j["data"] = cfg.data;
  j["fps"] = cfg.settings.fps;
  j["window"] = cfg.settings.window;
  j["hop"] = cfg.settings.train_hop;
  j["eval_hop"] = cfg.settings.eval_hop;
  j["split_ratio"] = cfg.settings.split_ratio;
  if (cfg.settings.max_history_s.has_value()) j["max_history_s"] = *cfg.settings.max_history_s;
  j["seed"] = cfg.seed;
  j["preprocess"] = preprocess_to_json(cfg.settings.preprocess);
  j["model"] = model_to_config_json(cfg.model);
  j["train"] = json{{"learning_rate", cfg.train.learning_rate},
                    {"epochs", cfg.train.epochs},
                    {"batch_size", cfg.train.batch_size},
                    {"adam", json{{"beta1", cfg.train.adam.beta1},
                                  {"beta2", cfg.train.adam.beta2},
                                  {"eps", cfg.train.adam.eps}}},
                    {"plateau", json{{"factor", cfg.train.plateau.factor},
                                     {"patience", cfg.train.plateau.patience},
                                     {"min_delta", cfg.train.plateau.min_delta},
                                     {"min_lr", cfg.train.plateau.min_lr}}}};
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::IoError, "cannot read run config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    raise(Err::ConfigError, "run config is not valid JSON: " + std::string(e.what()));
  }
  try {
    return run_config_from_json(j);
  } catch (const json::exception& e) {
    raise(Err::ConfigError, "run config field error: " + std::string(e.what()));
  }
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(Err::IoError, "cannot write run config " + path);
  out << run_config_to_json(cfg).dump(2) << '\n';
}

RunConfig run_config_from_trial(const TrialConfig& trial, uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.settings.fps = static_cast<int>(config_int(trial, "fps"));
  cfg.settings.window = static_cast<int>(config_int(trial, "window"));
  cfg.settings.train_hop = static_cast<int>(config_int(trial, "hop"));
  cfg.settings.eval_hop = 2;  // per-frame evaluation is reserved for final models
  cfg.settings.preprocess.swap_enabled = config_int(trial, "swap") != 0;
  cfg.settings.preprocess.impute_constant =
      static_cast<float>(config_double(trial, "impute_constant"));
  cfg.settings.preprocess.reduce = parse_reduce_mode(config_str(trial, "reduce"));
  cfg.settings.preprocess.normalize = parse_normalize_mode(config_str(trial, "normalize"));
  cfg.train.learning_rate = config_double(trial, "learning_rate");
  cfg.train.batch_size = static_cast<int>(config_int(trial, "batch_size"));
  cfg.train.epochs = static_cast<int>(config_int(trial, "epochs"));
  cfg.train.seed = seed;

  const int features = feature_length(cfg.settings.preprocess.reduce);
  const std::string family = config_str(trial, "family");
  if (family == "td_dense") {
    std::vector<int> td(config_int(trial, "td_layers"),
                        static_cast<int>(config_int(trial, "td_units")));
    std::vector<int> dense(config_int(trial, "dense_layers"),
                           static_cast<int>(config_int(trial, "dense_units")));
    cfg.model = make_td_dense_spec(cfg.settings.window, features, td, dense);
  } else if (family == "lstm") {
    std::vector<int> units(config_int(trial, "lstm_layers"),
                           static_cast<int>(config_int(trial, "lstm_units")));
    cfg.model = make_lstm_spec(cfg.settings.window, features, units);
  } else if (family == "conv1d") {
    const int layers = static_cast<int>(config_int(trial, "conv_layers"));
    const bool doubling = config_int(trial, "conv_double") != 0;
    const int base = static_cast<int>(config_int(trial, "conv_filters"));
    std::vector<ConvLayerDims> convs;
    int filters = base;
    for (int i = 0; i < layers; ++i) {
      ConvLayerDims dims;
      dims.filters = std::min(128, filters);
      dims.kernel = static_cast<int>(config_int(trial, "conv_kernel"));
      dims.stride = static_cast<int>(config_int(trial, "conv_stride"));
      dims.padding = parse_padding(config_str(trial, "conv_padding"));
      convs.push_back(dims);
      if (doubling) filters *= 2;
    }
    const int pool = config_int(trial, "conv_pool") != 0
                         ? static_cast<int>(config_int(trial, "conv_pool_sections"))
                         : 0;
    cfg.model = make_conv_spec(cfg.settings.window, features, convs, pool);
  } else {
    raise(Err::ConfigError, "unknown family '" + family + "'");
  }
  return cfg;
}

TrialRecord run_data_trial(const TrialConfig& trial, const std::vector<LabeledStream>& streams,
                           int source_fps, uint64_t seed) {
  TrialRecord rec;
  rec.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    RunConfig cfg = run_config_from_trial(trial, seed);
    cfg.settings.source_fps = source_fps;
    validate_spec(cfg.model);
    CompiledDataset data = compile_dataset(streams, cfg.settings);
    CompiledBatchSource train_source(&data, &data.train);
    CompiledBatchSource val_source(&data, &data.val);
    TrainResult trained =
        train(cfg.model, manifest_for(cfg.settings), train_source, &val_source, cfg.train);
    rec.ok = true;
    rec.param_count = trained.model.param_count();
    if (!trained.history.empty()) {
      rec.val_accuracy = trained.history.back().val_accuracy;
      rec.val_loss = trained.history.back().val_loss;
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.finished_unix_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
  return rec;
}

}  // namespace mpar

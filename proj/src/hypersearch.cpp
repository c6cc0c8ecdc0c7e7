#include "mpar/hypersearch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace mpar {

using nlohmann::json;

Dim* ParamSpace::find(const std::string& name) {
  for (auto& [n, d] : dims)
    if (n == name) return &d;
  return nullptr;
}

const Dim* ParamSpace::find(const std::string& name) const {
  for (const auto& [n, d] : dims)
    if (n == name) return &d;
  return nullptr;
}

std::string param_value_str(const ParamValue& v) {
  if (const auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", *d);
    return buf;
  }
  return std::get<std::string>(v);
}

json param_value_to_json(const ParamValue& v) {
  if (const auto* i = std::get_if<int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

ParamValue param_value_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  raise(Err::ConfigError, "parameter values must be numbers or strings");
}

namespace {

constexpr int kMaxResampleAttempts = 500;
constexpr double kDimMutationRate = 0.12;

// Family-specific dimensions carry their family's prefix.
bool dim_active(const std::string& name, const std::string& family) {
  auto has_prefix = [&](const char* p) { return name.rfind(p, 0) == 0; };
  if (has_prefix("lstm_")) return family == "lstm";
  if (has_prefix("td_") || has_prefix("dense_")) return family == "td_dense";
  if (has_prefix("conv_")) return family == "conv1d";
  return true;
}

ParamValue sample_dim(const Dim& dim, Rng& rng) {
  if (const auto* f = std::get_if<FrozenDim>(&dim)) return f->value;
  if (const auto* c = std::get_if<CategoricalDim>(&dim)) {
    if (c->options.empty()) raise(Err::UnsatisfiableConstraints, "empty categorical dimension");
    return c->options[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(c->options.size()) - 1))];
  }
  if (const auto* r = std::get_if<IntRangeDim>(&dim)) return uniform_int(rng, r->lo, r->hi);
  const auto& l = std::get<LogUniformDim>(dim);
  return std::exp(uniform(rng, std::log(l.lo), std::log(l.hi)));
}

double as_number(const ParamValue& v) {
  if (const auto* i = std::get_if<int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  raise(Err::ConfigError, "expected a numeric parameter");
}

std::vector<const TrialRecord*> top_trials(const std::vector<TrialRecord>& trials,
                                           double top_quantile) {
  std::vector<const TrialRecord*> ok;
  for (const TrialRecord& t : trials)
    if (t.ok) ok.push_back(&t);
  std::stable_sort(ok.begin(), ok.end(), [](const TrialRecord* a, const TrialRecord* b) {
    if (a->val_accuracy != b->val_accuracy) return a->val_accuracy > b->val_accuracy;
    return a->index < b->index;
  });
  if (ok.empty()) return ok;
  const size_t k = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(top_quantile * static_cast<double>(ok.size()))));
  ok.resize(std::min(ok.size(), k));
  return ok;
}

}  // namespace

bool config_satisfies(const TrialConfig& config, const SearchConstraints& constraints) {
  if (constraints.max_history_s.has_value()) {
    const auto w = config.find("window");
    const auto f = config.find("fps");
    if (w != config.end() && f != config.end()) {
      const double history = as_number(w->second) / as_number(f->second);
      if (history > *constraints.max_history_s) return false;
    }
  }
  if (constraints.generalization_only) {
    const auto n = config.find("normalize");
    if (n != config.end() && param_value_str(n->second) != "per_skeleton") return false;
  }
  return true;
}

TrialConfig sample(const ParamSpace& space, Rng& rng, const SearchConstraints& constraints) {
  for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    TrialConfig config;
    std::string family;
    for (const auto& [name, dim] : space.dims) {
      if (!family.empty() && !dim_active(name, family)) continue;
      ParamValue v;
      if (name == "normalize" && constraints.generalization_only) {
        v = std::string("per_skeleton");
      } else {
        v = sample_dim(dim, rng);
      }
      if (name == "family") family = param_value_str(v);
      config.emplace(name, std::move(v));
    }
    if (config_satisfies(config, constraints)) return config;
  }
  raise(Err::UnsatisfiableConstraints,
        "no coherent configuration found after " + std::to_string(kMaxResampleAttempts) +
            " attempts");
}

ParamSpace shrink(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                  double top_quantile) {
  std::vector<const TrialRecord*> top = top_trials(trials, top_quantile);
  if (top.empty()) raise(Err::NoSuccessfulTrials, "shrink needs at least one successful trial");
  ParamSpace out = space;
  for (auto& [name, dim] : out.dims) {
    std::vector<ParamValue> values;
    for (const TrialRecord* t : top) {
      const auto it = t->config.find(name);
      if (it != t->config.end()) values.push_back(it->second);
    }
    if (values.empty()) continue;  // dimension unused by every top trial
    if (auto* c = std::get_if<CategoricalDim>(&dim)) {
      std::vector<ParamValue> kept;
      for (const ParamValue& opt : c->options)
        if (std::find(values.begin(), values.end(), opt) != values.end()) kept.push_back(opt);
      if (!kept.empty()) c->options = std::move(kept);
    } else if (auto* r = std::get_if<IntRangeDim>(&dim)) {
      int64_t lo = std::numeric_limits<int64_t>::max();
      int64_t hi = std::numeric_limits<int64_t>::min();
      for (const ParamValue& v : values) {
        lo = std::min(lo, std::get<int64_t>(v));
        hi = std::max(hi, std::get<int64_t>(v));
      }
      r->lo = std::max(r->lo, lo);
      r->hi = std::min(r->hi, hi);  // hull never widens the current range
      if (r->lo > r->hi) r->lo = r->hi;
    } else if (auto* l = std::get_if<LogUniformDim>(&dim)) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const ParamValue& v : values) {
        lo = std::min(lo, std::get<double>(v));
        hi = std::max(hi, std::get<double>(v));
      }
      l->lo = std::max(l->lo, lo);
      l->hi = std::min(l->hi, hi);
      if (l->lo > l->hi) l->lo = l->hi;
    }
  }
  return out;
}

ParamSpace freeze(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                  double top_quantile) {
  std::vector<const TrialRecord*> top = top_trials(trials, top_quantile);
  if (top.size() < 2) return space;  // unanimity needs at least two opinions
  ParamSpace out = space;
  for (auto& [name, dim] : out.dims) {
    if (std::holds_alternative<FrozenDim>(dim)) continue;
    std::vector<ParamValue> values;
    for (const TrialRecord* t : top) {
      const auto it = t->config.find(name);
      if (it != t->config.end()) values.push_back(it->second);
    }
    if (values.size() != top.size()) continue;
    const bool unanimous =
        std::all_of(values.begin(), values.end(), [&](const ParamValue& v) { return v == values[0]; });
    if (unanimous) dim = FrozenDim{values[0]};
  }
  return out;
}

ParamSpace advance_stage(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                         double top_quantile) {
  ParamSpace out = freeze(shrink(space, trials, top_quantile), trials, top_quantile);
  if (Dim* lr = out.find("learning_rate")) {
    if (auto* l = std::get_if<LogUniformDim>(lr)) {
      l->hi = std::max(l->lo, l->hi / 2);  // selectable learning rates decrease
    } else if (auto* c = std::get_if<CategoricalDim>(lr)) {
      if (c->options.size() > 1) {
        size_t drop = 0;
        for (size_t i = 1; i < c->options.size(); ++i)
          if (as_number(c->options[i]) > as_number(c->options[drop])) drop = i;
        c->options.erase(c->options.begin() + static_cast<std::ptrdiff_t>(drop));
      }
    }
  }
  if (Dim* ep = out.find("epochs")) {
    if (auto* r = std::get_if<IntRangeDim>(ep)) r->hi = std::min<int64_t>(512, r->hi * 2);
  }
  return out;
}

namespace {

TrialConfig surrogate_sample(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                             double top_quantile, Rng& rng, const SearchConstraints& constraints) {
  const std::vector<const TrialRecord*> top = top_trials(trials, top_quantile);
  for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    TrialConfig config;
    std::string family;
    for (const auto& [name, dim] : space.dims) {
      if (!family.empty() && !dim_active(name, family)) continue;
      ParamValue v;
      if (name == "normalize" && constraints.generalization_only) {
        v = std::string("per_skeleton");
      } else if (std::holds_alternative<FrozenDim>(dim)) {
        v = std::get<FrozenDim>(dim).value;
      } else {
        // empirical distribution of the top trials, falling back to the
        // prior; a small per-dimension mutation rate keeps coverage around
        // the incumbents
        std::vector<const ParamValue*> pool;
        for (const TrialRecord* t : top) {
          const auto it = t->config.find(name);
          if (it != t->config.end()) pool.push_back(&it->second);
        }
        if (pool.empty() || bernoulli(rng, kDimMutationRate)) {
          v = sample_dim(dim, rng);
        } else {
          v = *pool[static_cast<size_t>(
              uniform_int(rng, 0, static_cast<int64_t>(pool.size()) - 1))];
        }
      }
      if (name == "family") family = param_value_str(v);
      config.emplace(name, std::move(v));
    }
    if (config_satisfies(config, constraints)) return config;
  }
  raise(Err::UnsatisfiableConstraints, "surrogate could not satisfy the constraints");
}

int count_ok(const std::vector<TrialRecord>& trials) {
  int n = 0;
  for (const TrialRecord& t : trials) n += t.ok ? 1 : 0;
  return n;
}

}  // namespace

SearchResult search(const ParamSpace& space, const SearchConfig& cfg, const TrialRunner& runner,
                    std::ostream* log) {
  if (cfg.budget < 1) raise(Err::InvalidSpec, "search budget must be at least 1");
  if (cfg.stages < 1) raise(Err::InvalidSpec, "search needs at least one stage");

  SearchResult result;
  Rng rng = make_rng(cfg.seed, 0x736561726368ull);
  ParamSpace current = space;
  const int per_stage = cfg.budget / cfg.stages;
  int remainder = cfg.budget % cfg.stages;
  int next_index = 0;

  for (int stage = 0; stage < cfg.stages; ++stage) {
    result.stage_spaces.push_back(current);
    int stage_budget = per_stage + (remainder > 0 ? 1 : 0);
    if (remainder > 0) --remainder;
    while (stage_budget > 0) {
      const int wave = std::min(stage_budget, std::max(1, cfg.jobs));
      // configs for the whole wave are drawn before any of it runs, so the
      // result is reproducible for a fixed --jobs
      std::vector<TrialConfig> configs;
      for (int i = 0; i < wave; ++i) {
        const bool explore = cfg.strategy == Strategy::Random ||
                             count_ok(result.trials) < cfg.min_observations ||
                             bernoulli(rng, cfg.explore_rate);
        configs.push_back(explore
                              ? sample(current, rng, cfg.constraints)
                              : surrogate_sample(current, result.trials, cfg.top_quantile, rng,
                                                 cfg.constraints));
      }
      std::vector<TrialRecord> records(wave);
      auto run_one = [&](int i) {
        const int index = next_index + i;
        records[i] = runner(configs[i], mix_seed(cfg.seed, static_cast<uint64_t>(index)));
        records[i].index = index;
        records[i].config = configs[i];
      };
      if (wave == 1 || cfg.jobs <= 1) {
        for (int i = 0; i < wave; ++i) run_one(i);
      } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < wave; ++i) pool.emplace_back(run_one, i);
        for (auto& t : pool) t.join();
      }
      for (TrialRecord& rec : records) {
        if (log) *log << trial_to_json(rec).dump() << '\n';
        result.trials.push_back(std::move(rec));
      }
      next_index += wave;
      stage_budget -= wave;
    }
    if (stage + 1 < cfg.stages)
      current = advance_stage(current, result.trials, cfg.top_quantile);
  }

  for (size_t i = 0; i < result.trials.size(); ++i) {
    const TrialRecord& t = result.trials[i];
    if (!t.ok) continue;
    if (result.best_index < 0 || t.val_accuracy > result.trials[result.best_index].val_accuracy)
      result.best_index = static_cast<int>(i);
  }
  if (result.best_index < 0)
    raise(Err::NoSuccessfulTrials, "every trial in the search failed");
  return result;
}

ParamSpace default_space() {
  ParamSpace s;
  s.add("family", CategoricalDim{{std::string("lstm"), std::string("td_dense"), std::string("conv1d")}});
  s.add("fps", CategoricalDim{{int64_t{1}, int64_t{2}, int64_t{3}, int64_t{5}, int64_t{6},
                               int64_t{10}, int64_t{15}, int64_t{30}}});
  s.add("window", IntRangeDim{10, 105});
  s.add("hop", IntRangeDim{1, 8});
  s.add("swap", CategoricalDim{{int64_t{0}, int64_t{1}}});
  s.add("impute_constant", CategoricalDim{{-1.0, 0.0, 2.0}});
  s.add("reduce", CategoricalDim{{std::string("full"), std::string("five_points"),
                                  std::string("center_of_gravity")}});
  s.add("normalize", CategoricalDim{{std::string("image_absolute"), std::string("on_most_recent"),
                                     std::string("per_skeleton")}});
  s.add("learning_rate", LogUniformDim{1e-5, 3e-3});
  s.add("batch_size", CategoricalDim{{int64_t{16}, int64_t{32}, int64_t{64}, int64_t{128}}});
  s.add("epochs", IntRangeDim{8, 48});
  s.add("lstm_layers", IntRangeDim{1, 20});
  s.add("lstm_units", IntRangeDim{4, 250});
  s.add("td_layers", IntRangeDim{0, 20});
  s.add("td_units", IntRangeDim{4, 500});
  s.add("dense_layers", IntRangeDim{0, 20});
  s.add("dense_units", IntRangeDim{4, 500});
  s.add("conv_layers", IntRangeDim{1, 10});
  s.add("conv_filters", IntRangeDim{4, 128});
  s.add("conv_kernel", IntRangeDim{2, 9});
  s.add("conv_stride", IntRangeDim{1, 5});
  s.add("conv_padding", CategoricalDim{{std::string("causal"), std::string("same")}});
  s.add("conv_double", CategoricalDim{{int64_t{0}, int64_t{1}}});
  s.add("conv_pool", CategoricalDim{{int64_t{0}, int64_t{1}}});
  s.add("conv_pool_sections", IntRangeDim{1, 120});
  return s;
}

json space_to_json(const ParamSpace& space) {
  json dims = json::object();
  for (const auto& [name, dim] : space.dims) {
    json d;
    if (const auto* c = std::get_if<CategoricalDim>(&dim)) {
      d["type"] = "categorical";
      json opts = json::array();
      for (const ParamValue& v : c->options) opts.push_back(param_value_to_json(v));
      d["options"] = opts;
    } else if (const auto* r = std::get_if<IntRangeDim>(&dim)) {
      d["type"] = "int_range";
      d["lo"] = r->lo;
      d["hi"] = r->hi;
    } else if (const auto* l = std::get_if<LogUniformDim>(&dim)) {
      d["type"] = "log_uniform";
      d["lo"] = l->lo;
      d["hi"] = l->hi;
    } else {
      d["type"] = "frozen";
      d["value"] = param_value_to_json(std::get<FrozenDim>(dim).value);
    }
    dims[name] = d;
  }
  return json{{"dimensions", dims}, {"order", [&] {
                 json order = json::array();
                 for (const auto& [name, dim] : space.dims) order.push_back(name);
                 return order;
               }()}};
}

ParamSpace space_from_json(const json& j) {
  ParamSpace space;
  try {
    const json& dims = j.at("dimensions");
    std::vector<std::string> order;
    if (j.contains("order")) {
      for (const json& n : j["order"]) order.push_back(n.get<std::string>());
    } else {
      for (auto it = dims.begin(); it != dims.end(); ++it) order.push_back(it.key());
    }
    for (const std::string& name : order) {
      const json& d = dims.at(name);
      const std::string type = d.at("type").get<std::string>();
      if (type == "categorical") {
        CategoricalDim c;
        for (const json& o : d.at("options")) c.options.push_back(param_value_from_json(o));
        if (c.options.empty()) raise(Err::ConfigError, "dimension '" + name + "' has no options");
        space.add(name, c);
      } else if (type == "int_range") {
        IntRangeDim r{d.at("lo").get<int64_t>(), d.at("hi").get<int64_t>()};
        if (r.lo > r.hi) raise(Err::ConfigError, "dimension '" + name + "' has lo > hi");
        space.add(name, r);
      } else if (type == "log_uniform") {
        LogUniformDim l{d.at("lo").get<double>(), d.at("hi").get<double>()};
        if (!(l.lo > 0) || l.lo > l.hi)
          raise(Err::ConfigError, "dimension '" + name + "' needs 0 < lo <= hi");
        space.add(name, l);
      } else if (type == "frozen") {
        space.add(name, FrozenDim{param_value_from_json(d.at("value"))});
      } else {
        raise(Err::ConfigError, "unknown dimension type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    raise(Err::ConfigError, "space file field error: " + std::string(e.what()));
  }
  return space;
}

ParamSpace load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::IoError, "cannot read space file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    raise(Err::ConfigError, "space file is not valid JSON: " + std::string(e.what()));
  }
  return space_from_json(j);
}

void save_space(const ParamSpace& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(Err::IoError, "cannot write space file " + path);
  out << space_to_json(space).dump(2) << '\n';
}

json config_to_json(const TrialConfig& config) {
  json out = json::object();
  for (const auto& [k, v] : config) out[k] = param_value_to_json(v);
  return out;
}

TrialConfig config_from_json(const json& j) {
  TrialConfig out;
  for (auto it = j.begin(); it != j.end(); ++it) out.emplace(it.key(), param_value_from_json(*it));
  return out;
}

json trial_to_json(const TrialRecord& rec) {
  return json{{"index", rec.index},
              {"status", rec.ok ? "ok" : "failed"},
              {"error", rec.error},
              {"config", config_to_json(rec.config)},
              {"val_accuracy", rec.val_accuracy},
              {"val_loss", rec.val_loss},
              {"param_count", rec.param_count},
              {"wall_time_s", rec.wall_time_s},
              {"finished_unix_ms", rec.finished_unix_ms},
              {"seed", rec.seed}};
}

TrialRecord trial_from_json(const json& j) {
  TrialRecord rec;
  rec.index = j.at("index").get<int>();
  rec.ok = j.at("status").get<std::string>() == "ok";
  rec.error = j.value("error", "");
  rec.config = config_from_json(j.at("config"));
  rec.val_accuracy = j.value("val_accuracy", 0.0);
  rec.val_loss = j.value("val_loss", 0.0);
  rec.param_count = j.value("param_count", int64_t{0});
  rec.wall_time_s = j.value("wall_time_s", 0.0);
  rec.finished_unix_ms = j.value("finished_unix_ms", int64_t{0});
  rec.seed = j.value("seed", uint64_t{0});
  return rec;
}

int64_t config_int(const TrialConfig& c, const std::string& key) {
  const auto it = c.find(key);
  if (it == c.end()) raise(Err::ConfigError, "missing parameter '" + key + "'");
  if (const auto* i = std::get_if<int64_t>(&it->second)) return *i;
  raise(Err::ConfigError, "parameter '" + key + "' is not an integer");
}

double config_double(const TrialConfig& c, const std::string& key) {
  const auto it = c.find(key);
  if (it == c.end()) raise(Err::ConfigError, "missing parameter '" + key + "'");
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  if (const auto* i = std::get_if<int64_t>(&it->second)) return static_cast<double>(*i);
  raise(Err::ConfigError, "parameter '" + key + "' is not a number");
}

std::string config_str(const TrialConfig& c, const std::string& key) {
  const auto it = c.find(key);
  if (it == c.end()) raise(Err::ConfigError, "missing parameter '" + key + "'");
  return param_value_str(it->second);
}

}  // namespace mpar

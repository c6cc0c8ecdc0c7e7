#include "mpar/hypersearch.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"

using namespace mpar;

namespace {

// Smooth separable response surface over an enumerable grid, used as a
// brute-force-rankable stand-in for real trainings.
double surface_score(const TrialConfig& c) {
  const double a = static_cast<double>(config_int(c, "a"));
  const double b = static_cast<double>(config_int(c, "b"));
  const double cc = static_cast<double>(config_int(c, "c"));
  const double d = static_cast<double>(config_int(c, "d"));
  double score = std::sin(a * 1.7 + 0.3) + 0.8 * std::cos(b * 0.9) +
                 0.6 * std::sin(cc * 2.3 + 1.0) + 0.4 * std::cos(d * 0.7 + 2.0) +
                 0.2 * std::sin(a * d * 0.37);
  return 0.5 + score / 8.0;
}

ParamSpace grid_space() {
  ParamSpace s;
  auto options = [](int n) {
    CategoricalDim dim;
    for (int i = 0; i < n; ++i) dim.options.push_back(static_cast<int64_t>(i));
    return dim;
  };
  s.add("a", options(8));
  s.add("b", options(5));
  s.add("c", options(5));
  s.add("d", options(10));
  return s;
}

TrialRunner surface_runner() {
  return [](const TrialConfig& config, uint64_t seed) {
    TrialRecord rec;
    rec.ok = true;
    rec.seed = seed;
    rec.val_accuracy = surface_score(config);
    return rec;
  };
}

// brute-force oracle: the top-fraction config tuples of the full grid
std::set<std::string> oracle_top(double fraction) {
  std::vector<std::pair<double, std::string>> all;
  for (int64_t a = 0; a < 8; ++a)
    for (int64_t b = 0; b < 5; ++b)
      for (int64_t c = 0; c < 5; ++c)
        for (int64_t d = 0; d < 10; ++d) {
          TrialConfig cfg{{"a", a}, {"b", b}, {"c", c}, {"d", d}};
          all.emplace_back(surface_score(cfg), config_to_json(cfg).dump());
        }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::set<std::string> top;
  for (size_t i = 0; i < static_cast<size_t>(all.size() * fraction); ++i) top.insert(all[i].second);
  return top;
}

bool dim_subset(const Dim& narrow, const Dim& wide) {
  auto contains = [&](const ParamValue& v) {
    if (const auto* c = std::get_if<CategoricalDim>(&wide))
      return std::find(c->options.begin(), c->options.end(), v) != c->options.end();
    if (const auto* r = std::get_if<IntRangeDim>(&wide)) {
      const auto* i = std::get_if<int64_t>(&v);
      return i && *i >= r->lo && *i <= r->hi;
    }
    if (const auto* l = std::get_if<LogUniformDim>(&wide)) {
      const auto* d = std::get_if<double>(&v);
      return d && *d >= l->lo && *d <= l->hi;
    }
    return std::get<FrozenDim>(wide).value == v;
  };
  if (const auto* c = std::get_if<CategoricalDim>(&narrow)) {
    for (const ParamValue& v : c->options)
      if (!contains(v)) return false;
    return true;
  }
  if (const auto* r = std::get_if<IntRangeDim>(&narrow))
    return contains(ParamValue{r->lo}) && contains(ParamValue{r->hi});
  if (const auto* l = std::get_if<LogUniformDim>(&narrow))
    return contains(ParamValue{l->lo}) && contains(ParamValue{l->hi});
  return contains(std::get<FrozenDim>(narrow).value);
}

}  // namespace

TEST_CASE("sampling is deterministic and assigns every active dimension") {
  ParamSpace space = default_space();
  SearchConstraints none;
  Rng rng1 = make_rng(5);
  Rng rng2 = make_rng(5);
  for (int i = 0; i < 20; ++i) {
    TrialConfig a = sample(space, rng1, none);
    TrialConfig b = sample(space, rng2, none);
    CHECK(a == b);
    CHECK(a.count("family") == 1);
    CHECK(a.count("window") == 1);
    const std::string family = config_str(a, "family");
    if (family == "lstm") {
      CHECK(a.count("lstm_units") == 1);
      CHECK(a.count("conv_filters") == 0);
      CHECK(a.count("td_units") == 0);
    } else if (family == "conv1d") {
      CHECK(a.count("conv_filters") == 1);
      CHECK(a.count("lstm_units") == 0);
    } else {
      CHECK(a.count("td_units") == 1);
      CHECK(a.count("dense_units") == 1);
    }
  }
}

TEST_CASE("history and generalization constraints hold for every sample") {
  ParamSpace space = default_space();
  SearchConstraints constraints;
  constraints.max_history_s = 3.5;
  constraints.generalization_only = true;
  Rng rng = make_rng(9);
  for (int i = 0; i < 200; ++i) {
    TrialConfig c = sample(space, rng, constraints);
    CHECK(static_cast<double>(config_int(c, "window")) / config_int(c, "fps") <= 3.5);
    CHECK(config_str(c, "normalize") == "per_skeleton");
  }
}

TEST_CASE("window bound under the history budget at 30 fps is 105") {
  ParamSpace space = default_space();
  SearchConstraints constraints;
  constraints.max_history_s = 3.5;
  Rng rng = make_rng(10);
  int64_t max_window_at_30 = 0;
  for (int i = 0; i < 500; ++i) {
    TrialConfig c = sample(space, rng, constraints);
    if (config_int(c, "fps") == 30)
      max_window_at_30 = std::max(max_window_at_30, config_int(c, "window"));
  }
  CHECK(max_window_at_30 <= 105);
  CHECK(max_window_at_30 >= 90);  // the bound is actually approached
}

TEST_CASE("unsatisfiable constraints surface as an error") {
  ParamSpace space;
  space.add("fps", CategoricalDim{{int64_t{30}}});
  space.add("window", IntRangeDim{200, 300});
  SearchConstraints constraints;
  constraints.max_history_s = 3.5;
  Rng rng = make_rng(1);
  try {
    sample(space, rng, constraints);
    FAIL("expected UnsatisfiableConstraints");
  } catch (const Error& e) {
    CHECK(e.code() == Err::UnsatisfiableConstraints);
  }
}

TEST_CASE("shrink narrows to the hull of the top quantile and never widens") {
  ParamSpace space;
  space.add("x", IntRangeDim{0, 100});
  space.add("mode", CategoricalDim{{std::string("p"), std::string("q"), std::string("r")}});
  std::vector<TrialRecord> trials;
  auto add = [&](int64_t x, const char* mode, double acc) {
    TrialRecord t;
    t.index = static_cast<int>(trials.size());
    t.ok = true;
    t.val_accuracy = acc;
    t.config = {{"x", x}, {"mode", std::string(mode)}};
    trials.push_back(t);
  };
  add(10, "p", 0.9);
  add(30, "q", 0.8);
  add(90, "r", 0.1);
  add(60, "r", 0.2);
  add(20, "p", 0.85);

  // top 40% of 5 = 2 trials: x in {10, 20}, mode p only
  ParamSpace s1 = shrink(space, trials, 0.4);
  const auto* x1 = std::get_if<IntRangeDim>(s1.find("x"));
  REQUIRE(x1);
  CHECK(x1->lo == 10);
  CHECK(x1->hi == 20);
  const auto* m1 = std::get_if<CategoricalDim>(s1.find("mode"));
  REQUIRE(m1);
  REQUIRE(m1->options.size() == 1);
  CHECK(param_value_str(m1->options[0]) == "p");

  // idempotent on the same trial set
  ParamSpace s2 = shrink(s1, trials, 0.4);
  CHECK(dim_subset(*s2.find("x"), *s1.find("x")));
  CHECK(dim_subset(*s1.find("x"), *s2.find("x")));

  // a single top trial collapses every dimension
  ParamSpace s3 = shrink(space, trials, 0.1);
  const auto* x3 = std::get_if<IntRangeDim>(s3.find("x"));
  CHECK(x3->lo == 10);
  CHECK(x3->hi == 10);
}

TEST_CASE("shrink with no successful trials fails") {
  ParamSpace space = grid_space();
  std::vector<TrialRecord> trials(3);
  try {
    shrink(space, trials, 0.2);
    FAIL("expected NoSuccessfulTrials");
  } catch (const Error& e) {
    CHECK(e.code() == Err::NoSuccessfulTrials);
  }
}

TEST_CASE("freeze requires unanimity among top trials") {
  ParamSpace space;
  space.add("family", CategoricalDim{{std::string("lstm"), std::string("td_dense")}});
  space.add("batch", CategoricalDim{{int64_t{16}, int64_t{32}}});
  std::vector<TrialRecord> trials;
  for (int i = 0; i < 4; ++i) {
    TrialRecord t;
    t.index = i;
    t.ok = true;
    t.val_accuracy = 0.9 - 0.01 * i;
    t.config = {{"family", std::string("td_dense")}, {"batch", int64_t{i % 2 == 0 ? 16 : 32}}};
    trials.push_back(t);
  }
  ParamSpace frozen = freeze(space, trials, 0.5);
  CHECK(std::holds_alternative<FrozenDim>(*frozen.find("family")));
  CHECK(std::holds_alternative<CategoricalDim>(*frozen.find("batch")));

  // frozen dimensions survive a subsequent shrink unchanged
  ParamSpace shrunk = shrink(frozen, trials, 0.5);
  CHECK(std::holds_alternative<FrozenDim>(*shrunk.find("family")));
}

TEST_CASE("search runs exactly the budget and tolerates failures") {
  ParamSpace space = grid_space();
  SearchConfig cfg;
  cfg.budget = 10;
  cfg.strategy = Strategy::Random;
  cfg.seed = 3;
  int calls = 0;
  auto runner = [&calls](const TrialConfig& config, uint64_t seed) {
    TrialRecord rec;
    rec.seed = seed;
    ++calls;
    if (config_int(config, "a") % 2 == 0) {
      rec.ok = false;
      rec.error = "half the grid is broken";
    } else {
      rec.ok = true;
      rec.val_accuracy = surface_score(config);
    }
    return rec;
  };
  std::ostringstream log;
  SearchResult result = search(space, cfg, runner, &log);
  CHECK(calls == 10);
  CHECK(result.trials.size() == 10);
  CHECK(result.best_index >= 0);
  CHECK(result.best().ok);
  // the log holds one JSON object per trial, failed ones included
  int lines = 0, failed = 0;
  std::string line;
  std::istringstream read(log.str());
  while (std::getline(read, line)) {
    ++lines;
    TrialRecord back = trial_from_json(nlohmann::json::parse(line));
    failed += back.ok ? 0 : 1;
  }
  CHECK(lines == 10);
  CHECK(failed > 0);
}

TEST_CASE("search is deterministic given the seed") {
  ParamSpace space = grid_space();
  SearchConfig cfg;
  cfg.budget = 30;
  cfg.seed = 11;
  SearchResult a = search(space, cfg, surface_runner());
  SearchResult b = search(space, cfg, surface_runner());
  REQUIRE(a.trials.size() == b.trials.size());
  for (size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(a.trials[i].config == b.trials[i].config);
    CHECK(a.trials[i].val_accuracy == b.trials[i].val_accuracy);
  }
  CHECK(a.best_index == b.best_index);
}

TEST_CASE("surrogate-guided search lands in the oracle's top 5%") {
  const std::set<std::string> top = oracle_top(0.05);
  ParamSpace space = grid_space();
  int hits = 0;
  const int seeds = 6;
  for (int seed = 1; seed <= seeds; ++seed) {
    SearchConfig cfg;
    cfg.budget = 50;
    cfg.strategy = Strategy::SurrogateGuided;
    cfg.seed = static_cast<uint64_t>(seed);
    SearchResult result = search(space, cfg, surface_runner());
    hits += top.count(config_to_json(result.best().config).dump()) > 0;
  }
  CHECK(hits >= seeds - 1);
}

TEST_CASE("staged search narrows the space between stages") {
  ParamSpace space = grid_space();
  SearchConfig cfg;
  cfg.budget = 40;
  cfg.stages = 2;
  cfg.seed = 21;
  SearchResult result = search(space, cfg, surface_runner());
  REQUIRE(result.stage_spaces.size() == 2);
  CHECK(result.trials.size() == 40);
  for (const auto& [name, dim] : result.stage_spaces[1].dims) {
    const Dim* wide = result.stage_spaces[0].find(name);
    REQUIRE(wide);
    CHECK(dim_subset(dim, *wide));
  }
}

TEST_CASE("advance_stage decreases learning rates and raises the epoch cap") {
  ParamSpace space;
  space.add("learning_rate", LogUniformDim{1e-5, 1e-2});
  space.add("epochs", IntRangeDim{8, 32});
  space.add("x", IntRangeDim{0, 10});
  std::vector<TrialRecord> trials;
  for (int i = 0; i < 4; ++i) {
    TrialRecord t;
    t.index = i;
    t.ok = true;
    t.val_accuracy = 0.5 + 0.1 * i;
    t.config = {{"learning_rate", 1e-3 + 1e-4 * i}, {"epochs", int64_t{16}}, {"x", int64_t{i}}};
    trials.push_back(t);
  }
  ParamSpace next = advance_stage(space, trials, 0.5);
  const auto* lr = std::get_if<LogUniformDim>(next.find("learning_rate"));
  REQUIRE(lr);
  // the hull is [1.2e-3, 1.3e-3]; halving the ceiling collapses onto the floor
  CHECK(lr->hi < 1.3e-3);
  CHECK(lr->hi == doctest::Approx(lr->lo));
  // epochs was frozen by unanimity, which advance_stage respects
  CHECK(std::holds_alternative<FrozenDim>(*next.find("epochs")));

  // without unanimity the cap doubles
  trials[3].config["epochs"] = int64_t{8};
  ParamSpace next2 = advance_stage(space, trials, 0.75);
  const auto* ep = std::get_if<IntRangeDim>(next2.find("epochs"));
  REQUIRE(ep);
  CHECK(ep->lo == 8);
  CHECK(ep->hi == 32);  // hull [8,16], then the ceiling doubles
}

TEST_CASE("space file round trip") {
  ParamSpace space = default_space();
  nlohmann::json j = space_to_json(space);
  ParamSpace back = space_from_json(j);
  REQUIRE(back.dims.size() == space.dims.size());
  for (size_t i = 0; i < space.dims.size(); ++i) {
    CHECK(back.dims[i].first == space.dims[i].first);
    CHECK(dim_subset(back.dims[i].second, space.dims[i].second));
    CHECK(dim_subset(space.dims[i].second, back.dims[i].second));
  }
}

TEST_CASE("the default space covers the pipeline's dimension set") {
  ParamSpace space = default_space();
  for (const char* name : {"family", "fps", "window", "hop", "swap", "impute_constant", "reduce",
                           "normalize", "learning_rate", "batch_size", "epochs", "lstm_layers",
                           "lstm_units", "td_layers", "td_units", "dense_layers", "dense_units",
                           "conv_layers", "conv_filters", "conv_kernel", "conv_stride",
                           "conv_padding", "conv_double", "conv_pool", "conv_pool_sections"})
    CHECK(space.find(name) != nullptr);
  CHECK(space.dims.size() == 25);
}

TEST_CASE("every trial in a constrained search satisfies the constraints") {
  ParamSpace space = default_space();
  SearchConfig cfg;
  cfg.budget = 25;
  cfg.seed = 77;
  cfg.constraints.max_history_s = 3.5;
  cfg.constraints.generalization_only = true;
  auto runner = [](const TrialConfig& config, uint64_t seed) {
    TrialRecord rec;
    rec.ok = true;
    rec.seed = seed;
    rec.val_accuracy = 0.5 + 0.001 * static_cast<double>(config_int(config, "window"));
    return rec;
  };
  SearchResult result = search(space, cfg, runner);
  REQUIRE(result.trials.size() == 25);
  for (const TrialRecord& t : result.trials) {
    CHECK(config_satisfies(t.config, cfg.constraints));
    CHECK(static_cast<double>(config_int(t.config, "window")) / config_int(t.config, "fps") <=
          3.5);
    CHECK(config_str(t.config, "normalize") == "per_skeleton");
  }
}

TEST_CASE("a search where every trial fails reports NoSuccessfulTrials") {
  ParamSpace space = grid_space();
  SearchConfig cfg;
  cfg.budget = 5;
  cfg.strategy = Strategy::Random;
  auto runner = [](const TrialConfig&, uint64_t seed) {
    TrialRecord rec;
    rec.ok = false;
    rec.seed = seed;
    rec.error = "always broken";
    return rec;
  };
  try {
    search(space, cfg, runner);
    FAIL("expected NoSuccessfulTrials");
  } catch (const Error& e) {
    CHECK(e.code() == Err::NoSuccessfulTrials);
  }
}

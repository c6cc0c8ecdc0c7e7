#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mpar/error.hpp"
#include "mpar/rng.hpp"

namespace mpar {

using ParamValue = std::variant<int64_t, double, std::string>;

std::string param_value_str(const ParamValue& v);
nlohmann::json param_value_to_json(const ParamValue& v);
ParamValue param_value_from_json(const nlohmann::json& j);

struct CategoricalDim {
  std::vector<ParamValue> options;
};
struct IntRangeDim {
  int64_t lo = 0;
  int64_t hi = 0;
};
struct LogUniformDim {
  double lo = 1e-6;
  double hi = 1.0;
};
struct FrozenDim {
  ParamValue value;
};
using Dim = std::variant<CategoricalDim, IntRangeDim, LogUniformDim, FrozenDim>;

struct ParamSpace {
  std::vector<std::pair<std::string, Dim>> dims;

  Dim* find(const std::string& name);
  const Dim* find(const std::string& name) const;
  void add(std::string name, Dim dim) { dims.emplace_back(std::move(name), std::move(dim)); }
};

// One full parameter assignment; family-specific dimensions appear only for
// the assigned family.
using TrialConfig = std::map<std::string, ParamValue>;

struct TrialRecord {
  int index = 0;
  TrialConfig config;
  bool ok = false;
  std::string error;
  double val_accuracy = 0;
  double val_loss = 0;
  int64_t param_count = 0;
  double wall_time_s = 0;
  int64_t finished_unix_ms = 0;
  uint64_t seed = 0;
};

struct SearchConstraints {
  std::optional<double> max_history_s;  // window / fps budget
  bool generalization_only = false;     // forces per-skeleton normalization
};

enum class Strategy { Random, SurrogateGuided };

struct SearchConfig {
  int budget = 1;
  Strategy strategy = Strategy::SurrogateGuided;
  double top_quantile = 0.2;
  uint64_t seed = 0;
  SearchConstraints constraints;
  int stages = 1;
  double explore_rate = 0.3;  // surrogate mixing rate
  int min_observations = 8;   // pure exploration before the surrogate kicks in
  int jobs = 1;
};

using TrialRunner = std::function<TrialRecord(const TrialConfig&, uint64_t seed)>;

// Draws a coherent configuration; incoherent draws are rejected and retried.
TrialConfig sample(const ParamSpace& space, Rng& rng, const SearchConstraints& constraints);

bool config_satisfies(const TrialConfig& config, const SearchConstraints& constraints);

// Narrows every dimension to the hull of the top-quantile trials; never widens.
ParamSpace shrink(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                  double top_quantile);

// Freezes dimensions on which the top-quantile trials are unanimous.
ParamSpace freeze(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                  double top_quantile);

// Between stages: shrink + freeze, then decrease the learning-rate range and
// raise the epoch ceiling.
ParamSpace advance_stage(const ParamSpace& space, const std::vector<TrialRecord>& trials,
                         double top_quantile);

struct SearchResult {
  std::vector<TrialRecord> trials;
  int best_index = -1;
  std::vector<ParamSpace> stage_spaces;  // space at the start of each stage

  const TrialRecord& best() const { return trials.at(best_index); }
};

// Runs exactly `budget` trials; failures are logged, not fatal. When a log
// stream is given, one JSON object per trial is appended (JSONL).
SearchResult search(const ParamSpace& space, const SearchConfig& cfg, const TrialRunner& runner,
                    std::ostream* log = nullptr);

// The pipeline's full dimension set (fps, window, hop, preprocessing modes,
// family and per-family topology, optimizer settings).
ParamSpace default_space();

nlohmann::json space_to_json(const ParamSpace& space);
ParamSpace space_from_json(const nlohmann::json& j);
ParamSpace load_space(const std::string& path);
void save_space(const ParamSpace& space, const std::string& path);

nlohmann::json trial_to_json(const TrialRecord& rec);
TrialRecord trial_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrialConfig& config);
TrialConfig config_from_json(const nlohmann::json& j);

// Typed accessors with range validation.
int64_t config_int(const TrialConfig& c, const std::string& key);
double config_double(const TrialConfig& c, const std::string& key);
std::string config_str(const TrialConfig& c, const std::string& key);

}  // namespace mpar

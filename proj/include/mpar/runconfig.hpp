#pragma once

#include <string>

#include "json.hpp"
#include "mpar/hypersearch.hpp"
#include "mpar/pipeline.hpp"

namespace mpar {

// One structured file holding every pipeline setting; unknown keys are
// rejected so typos surface instead of silently using defaults.
struct RunConfig {
  std::string data;  // dataset index path, may be overridden on the command line
  PipelineSettings settings;
  ModelSpec model;    // built against the window/features implied by settings
  TrainConfig train;
  uint64_t seed = 0;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Decodes one search-space assignment into a runnable configuration.
RunConfig run_config_from_trial(const TrialConfig& trial, uint64_t seed);

// Executes ingest -> preprocess -> train -> evaluate for one configuration;
// build or training failures come back as a failed record, not an exception.
TrialRecord run_data_trial(const TrialConfig& trial, const std::vector<LabeledStream>& streams,
                           int source_fps, uint64_t seed);

}  // namespace mpar

#pragma once

#include <string>

#include "json.hpp"
#include "mpar/model.hpp"

namespace mpar {

inline constexpr int kContainerFormatVersion = 1;
inline constexpr char kContainerMagic[] = "MPAR1";

// Container layout: magic + newline, little-endian u32 manifest length, JSON
// manifest (format version, model spec, preprocess config, fps, window, class
// count, parameter count, blob checksum), then per-layer float32 LE weight
// blobs in spec order.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json preprocess_to_json(const PreprocessConfig& cfg);
PreprocessConfig preprocess_from_json(const nlohmann::json& j);

uint64_t fnv1a64(const void* data, size_t len);

}  // namespace mpar

#include "mpar/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mpar {

static_assert(std::endian::native == std::endian::little,
              "container weight blobs are written as little-endian floats");

using nlohmann::json;

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

json model_spec_to_json(const ModelSpec& spec) {
  json layers = json::array();
  using namespace layer_spec;
  for (const LayerSpec& ls : spec.layers) {
    json l;
    if (const auto* d = std::get_if<Dense>(&ls)) {
      l["kind"] = "dense";
      l["units"] = d->units;
      l["activation"] = activation_name(d->activation);
    } else if (const auto* d = std::get_if<TimeDistributedDense>(&ls)) {
      l["kind"] = "td_dense";
      l["units"] = d->units;
      l["activation"] = activation_name(d->activation);
    } else if (const auto* c = std::get_if<Conv1d>(&ls)) {
      l["kind"] = "conv1d";
      l["filters"] = c->filters;
      l["kernel"] = c->kernel;
      l["stride"] = c->stride;
      l["padding"] = padding_name(c->padding);
      l["activation"] = activation_name(c->activation);
    } else if (const auto* r = std::get_if<Lstm>(&ls)) {
      l["kind"] = "lstm";
      l["units"] = r->units;
      l["return_sequences"] = r->return_sequences;
    } else if (std::get_if<Flatten>(&ls)) {
      l["kind"] = "flatten";
    } else if (const auto* p = std::get_if<AdaptiveAvgPool>(&ls)) {
      l["kind"] = "adaptive_avg_pool";
      l["sections"] = p->sections;
    } else if (const auto* s = std::get_if<SoftmaxOutput>(&ls)) {
      l["kind"] = "softmax_output";
      l["classes"] = s->classes;
    }
    layers.push_back(l);
  }
  return json{{"window", spec.window},
              {"features", spec.features},
              {"family", family_name(spec.family)},
              {"layers", layers}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.window = j.at("window").get<int>();
  spec.features = j.at("features").get<int>();
  spec.family = parse_family(j.at("family").get<std::string>());
  using namespace layer_spec;
  for (const json& l : j.at("layers")) {
    const std::string kind = l.at("kind").get<std::string>();
    if (kind == "dense") {
      spec.layers.push_back(
          Dense{l.at("units").get<int>(), parse_activation(l.at("activation").get<std::string>())});
    } else if (kind == "td_dense") {
      spec.layers.push_back(TimeDistributedDense{
          l.at("units").get<int>(), parse_activation(l.at("activation").get<std::string>())});
    } else if (kind == "conv1d") {
      spec.layers.push_back(Conv1d{l.at("filters").get<int>(), l.at("kernel").get<int>(),
                                   l.at("stride").get<int>(),
                                   parse_padding(l.at("padding").get<std::string>()),
                                   parse_activation(l.at("activation").get<std::string>())});
    } else if (kind == "lstm") {
      spec.layers.push_back(Lstm{l.at("units").get<int>(), l.at("return_sequences").get<bool>()});
    } else if (kind == "flatten") {
      spec.layers.push_back(Flatten{});
    } else if (kind == "adaptive_avg_pool") {
      spec.layers.push_back(AdaptiveAvgPool{l.at("sections").get<int>()});
    } else if (kind == "softmax_output") {
      spec.layers.push_back(SoftmaxOutput{l.at("classes").get<int>()});
    } else {
      raise(Err::ConfigError, "unknown layer kind '" + kind + "'");
    }
  }
  return spec;
}

json preprocess_to_json(const PreprocessConfig& cfg) {
  return json{{"swap", cfg.swap_enabled},
              {"impute_constant", cfg.impute_constant},
              {"reduce", reduce_mode_name(cfg.reduce)},
              {"normalize", normalize_mode_name(cfg.normalize)},
              {"epsilon", cfg.epsilon}};
}

PreprocessConfig preprocess_from_json(const json& j) {
  PreprocessConfig cfg;
  cfg.swap_enabled = j.at("swap").get<bool>();
  cfg.impute_constant = j.at("impute_constant").get<float>();
  cfg.reduce = parse_reduce_mode(j.at("reduce").get<std::string>());
  cfg.normalize = parse_normalize_mode(j.at("normalize").get<std::string>());
  cfg.epsilon = j.at("epsilon").get<float>();
  if (cfg.epsilon <= 0) raise(Err::ConfigError, "epsilon must be positive");
  return cfg;
}

namespace {

std::string checksum_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::vector<char> blobs;
  for (const Mat<float>* p : model.params()) {
    const size_t bytes = static_cast<size_t>(p->size()) * sizeof(float);
    const size_t off = blobs.size();
    blobs.resize(off + bytes);
    std::memcpy(blobs.data() + off, p->d.data(), bytes);
  }

  json manifest;
  manifest["format_version"] = kContainerFormatVersion;
  manifest["model_spec"] = model_spec_to_json(model.spec);
  manifest["preprocess"] = preprocess_to_json(model.manifest.preprocess);
  manifest["fps"] = model.manifest.fps;
  manifest["window_len"] = model.manifest.window_len;
  manifest["classes"] = model.manifest.classes;
  manifest["param_count"] = model.param_count();
  manifest["checksum"] = checksum_hex(fnv1a64(blobs.data(), blobs.size()));
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Err::IoError, "cannot write " + path);
  out << kContainerMagic << '\n';
  const uint32_t len = static_cast<uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
  if (!out) raise(Err::IoError, "short write to " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Err::IoError, "cannot read " + path);

  char magic[6] = {};
  in.read(magic, 6);
  if (!in || std::string(magic, 5) != kContainerMagic || magic[5] != '\n')
    raise(Err::CorruptContainer, "bad magic bytes in " + path);

  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (64u << 20)) raise(Err::CorruptContainer, "bad manifest length");
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) raise(Err::CorruptContainer, "truncated manifest");

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception&) {
    raise(Err::CorruptContainer, "manifest is not valid JSON");
  }

  Model model;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version > kContainerFormatVersion)
      raise(Err::VersionMismatch, "container format " + std::to_string(version) +
                                      " is newer than supported " +
                                      std::to_string(kContainerFormatVersion));
    model = build_model<float>(model_spec_from_json(manifest.at("model_spec")), 0);
    model.manifest.preprocess = preprocess_from_json(manifest.at("preprocess"));
    model.manifest.fps = manifest.at("fps").get<int>();
    model.manifest.window_len = manifest.at("window_len").get<int>();
    model.manifest.classes = manifest.at("classes").get<int>();
  } catch (const json::exception& e) {
    raise(Err::CorruptContainer, std::string("manifest field error: ") + e.what());
  }

  std::vector<char> blobs;
  {
    std::vector<char> chunk(1 << 16);
    while (in.read(chunk.data(), chunk.size()) || in.gcount() > 0) {
      blobs.insert(blobs.end(), chunk.data(), chunk.data() + in.gcount());
      if (in.eof()) break;
    }
  }
  size_t expected = 0;
  for (const Mat<float>* p : model.params()) expected += static_cast<size_t>(p->size()) * sizeof(float);
  if (blobs.size() != expected)
    raise(Err::CorruptContainer, "weight payload is " + std::to_string(blobs.size()) +
                                     " bytes, expected " + std::to_string(expected));
  const std::string stored = manifest.at("checksum").get<std::string>();
  if (checksum_hex(fnv1a64(blobs.data(), blobs.size())) != stored)
    raise(Err::CorruptContainer, "weight checksum mismatch");
  if (manifest.at("param_count").get<int64_t>() != model.param_count())
    raise(Err::CorruptContainer, "parameter count mismatch");

  size_t off = 0;
  for (Mat<float>* p : model.params()) {
    const size_t bytes = static_cast<size_t>(p->size()) * sizeof(float);
    std::memcpy(p->d.data(), blobs.data() + off, bytes);
    off += bytes;
  }
  return model;
}

}  // namespace mpar

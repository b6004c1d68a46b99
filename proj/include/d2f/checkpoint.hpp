#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "d2f/fusion.hpp"
#include "d2f/tensor_io.hpp"

// Checkpoint directory: one D2FT file per parameter plus manifest.json
// holding the config and the name/shape/file of every parameter.
namespace d2f {

inline std::string parameter_file_name(const std::string& name) { return name + ".d2ft"; }

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_atomic(path, text.data(), text.size());
}

inline nlohmann::json parameter_sidecar(const std::vector<Parameter<float>*>& params) {
  auto list = nlohmann::json::array();
  for (const auto* p : params)
    list.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"file", parameter_file_name(p->name)}});
  return list;
}

inline void save_checkpoint(const std::filesystem::path& dir, FusionModel<float>& model) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  const auto params = model.parameters();
  for (const auto* p : params) save_tensor(dir / parameter_file_name(p->name), p->value);
  nlohmann::json manifest{{"config", model.config}, {"parameters", parameter_sidecar(params)}};
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline FusionModel<float> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("missing checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  auto model = FusionModel<float>::init(manifest.at("config").get<FusionConfig>());
  for (auto* p : model.parameters()) {
    auto t = load_tensor(dir / parameter_file_name(p->name));
    if (t.shape() != p->value.shape())
      throw FormatError("checkpoint tensor " + p->name + " has shape " + shape_string(t.shape()) +
                        ", expected " + shape_string(p->value.shape()));
    p->value = std::move(t);
  }
  return model;
}

}  // namespace d2f

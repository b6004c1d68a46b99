#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "d2f/error.hpp"
#include "d2f/spectral_attention.hpp"

namespace d2f {

// Joint configuration of the detection head and the toy training run.
struct FusionConfig {
  std::size_t channels = 16;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t reduction = 8;
  std::size_t groups = 16;
  std::vector<FrequencyIndex> freqs;  // empty: zigzag default
  BasisVariant basis_variant = BasisVariant::paper_literal;
  std::size_t excite_reduction = 4;
  std::size_t tokens = 16;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  double lr = 0.5;
  std::size_t batch = 16;
  std::size_t samples = 2000;
  double threshold = 0.5;

  static constexpr std::size_t kBackboneStride = 4;
  static constexpr double kInputMean = 0.5;
  static constexpr double kInputStd = 0.25;

  std::size_t image_size() const { return height * kBackboneStride; }

  std::vector<FrequencyIndex> resolved_freqs() const {
    return freqs.empty() ? zigzag_frequencies(groups, height, width) : freqs;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("config: " + what);
    };
    need(channels > 0 && height > 0 && width > 0, "C, H and W must be positive");
    need(reduction > 0 && channels % reduction == 0, "C must be divisible by reduction");
    need(groups > 0 && channels % groups == 0, "C must be divisible by n");
    need(freqs.empty() || freqs.size() == groups, "freqs must list exactly n pairs");
    for (const auto& [u, v] : resolved_freqs())
      need(u < height && v < width, "frequency index out of range for H x W");
    need(excite_reduction > 0 && channels % excite_reduction == 0, "C must be divisible by r_e");
    need(tokens > 0 && (height * width) % tokens == 0, "H*W must be divisible by m");
    need(batch > 0, "batch must be positive");
    need(lr >= 0.0, "lr must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const FusionConfig& c) {
  nlohmann::json freqs = nlohmann::json::array();
  for (const auto& [u, v] : c.resolved_freqs()) freqs.push_back({u, v});
  j = nlohmann::json{{"C", c.channels},          {"H", c.height},
                     {"W", c.width},             {"reduction", c.reduction},
                     {"n", c.groups},            {"freqs", freqs},
                     {"basis_variant", basis_variant_name(c.basis_variant)},
                     {"r_e", c.excite_reduction}, {"m", c.tokens},
                     {"seed", c.seed},           {"epochs", c.epochs},
                     {"lr", c.lr},               {"batch", c.batch},
                     {"samples", c.samples},     {"threshold", c.threshold}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, FusionConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known = {"C",  "H",   "W",      "reduction", "n",     "freqs",
                                                 "basis_variant", "r_e", "m", "seed", "epochs",
                                                 "lr", "batch", "samples", "threshold"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("C", c.channels);
    get("H", c.height);
    get("W", c.width);
    get("reduction", c.reduction);
    get("n", c.groups);
    get("r_e", c.excite_reduction);
    get("m", c.tokens);
    get("seed", c.seed);
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("batch", c.batch);
    get("samples", c.samples);
    get("threshold", c.threshold);
    if (j.contains("basis_variant")) c.basis_variant = parse_basis_variant(j.at("basis_variant").get<std::string>());
    if (j.contains("freqs")) {
      c.freqs.clear();
      for (const auto& pair : j.at("freqs")) {
        if (!pair.is_array() || pair.size() != 2) throw ConfigError("config: freqs entries must be [u, v]");
        c.freqs.emplace_back(pair[0].get<std::size_t>(), pair[1].get<std::size_t>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline FusionConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  auto c = j.get<FusionConfig>();
  c.validate();
  return c;
}

}  // namespace d2f

#pragma once

#include <filesystem>

#include "d2f/tensor_io.hpp"

// File-based feature maps (C x H x W) standing in for a backbone.
namespace d2f {

inline Tensor load_features(const std::filesystem::path& path) {
  auto t = load_tensor(path);
  if (t.rank() != 3) throw ShapeError("features must be C x H x W, got " + shape_string(t.shape()));
  return t;
}

inline void save_features(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 3) throw ShapeError("features must be C x H x W, got " + shape_string(features.shape()));
  save_tensor(path, features);
}

}  // namespace d2f

#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <optional>
#include <vector>

#include "sketchmem/sketchmem.hpp"

namespace sketchmem::testing {

inline SketchSpace small_space(std::size_t dim, std::size_t modules, std::size_t output_dim, std::uint64_t seed = 7) {
  ModuleRegistry registry;
  for (std::size_t i = 0; i < modules; ++i) registry.add({static_cast<ModuleId>(i), output_dim, "m" + std::to_string(i)});
  SketchConfig config;
  config.sketch_dim = dim;
  config.global_seed = seed;
  return SketchSpace(config, registry);
}

inline Eigen::VectorXd unit(Stream& rng, std::size_t dim) { return simnet::random_unit(rng, dim); }

inline std::vector<ModuleId> sorted(std::vector<ModuleId> v) {
  std::sort(v.begin(), v.end());
  return v;
}

/// Kind of the sketchmem::Error thrown by fn, or nullopt if it returned normally.
inline std::optional<ErrorKind> kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace sketchmem::testing

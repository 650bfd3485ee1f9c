#pragma once

#include "regmap/volume.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("regmap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline regmap::Image random_image(const regmap::Geometry& g, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  regmap::Image img(g);
  for (std::int64_t n = 0; n < img.size(); ++n) img[n] = u(rng);
  return img;
}

inline regmap::Field constant_field(const regmap::Geometry& g, const Eigen::Vector3d& v) {
  regmap::Field f(g);
  f.vectors().colwise() = v;
  return f;
}

}  // namespace testutil

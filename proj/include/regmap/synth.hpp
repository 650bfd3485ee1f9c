#pragma once

#include "regmap/volume.hpp"

#include <cstdint>
#include <string>

namespace regmap {

struct PhantomOptions {
  double min_intensity = 0.0;
  double max_intensity = 1000.0;
  int tubes = 6;
  int blobs = 10;
};

/// Phantom plus the mask of its deliberately featureless region.
struct Phantom {
  Image image;
  Volume<std::uint8_t> homogeneous;
};

/// Smooth background, tube- and blob-like structures, fine texture and one
/// homogeneous ellipsoid. Deterministic per seed. Requires dims >= 16 per axis.
Phantom make_phantom(const Index3& dims, const Point3& spacing, std::uint64_t seed, const PhantomOptions& opt = {});

inline Image generate_phantom(const Index3& dims, const Point3& spacing, std::uint64_t seed,
                              const PhantomOptions& opt = {}) {
  return make_phantom(dims, spacing, seed, opt).image;
}

/// Uniform noise in [-amplitude, amplitude] per component, Gaussian-smoothed
/// with sigma (mm), rescaled so the largest vector norm equals amplitude.
Field generate_random_dvf(const Geometry& geometry, double amplitude, double sigma_mm, std::uint64_t seed);

/// Per-voxel ||u_b - u_true||.
Image true_error_map(const Field& t_b, const Field& t_true);

/// A fixed/moving pair with exact dense ground truth: fixed(x) = moving(x + u_true(x)) + noise.
struct SyntheticPair {
  std::string id;
  Image fixed;
  Image moving;
  Field truth;
  Volume<std::uint8_t> homogeneous;  // on the fixed grid
};

struct PairOptions {
  Index3 dims = Index3::Constant(64);
  Point3 spacing = Point3::Constant(2.0);
  double amplitude_mm = 8.0;
  double sigma_mm = 20.0;
  double noise_sd = 10.0;
};

SyntheticPair make_synthetic_pair(const std::string& id, const PairOptions& opt, std::uint64_t seed);

}  // namespace regmap

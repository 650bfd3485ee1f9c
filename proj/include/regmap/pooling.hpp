#pragma once

#include "regmap/feat_reg.hpp"
#include "regmap/volume.hpp"

#include <span>
#include <vector>

namespace regmap {

/// 3D summed-volume table with one voxel of zero padding on the low side.
class IntegralVolume {
 public:
  explicit IntegralVolume(const Image& map);

  /// Sum over the inclusive voxel range [lo, hi] (eight-corner inclusion-exclusion).
  [[nodiscard]] double box_sum(const Index3& lo, const Index3& hi) const;
  [[nodiscard]] double box_sum(const VoxelBox& b) const { return box_sum(b.lo, b.hi); }
  [[nodiscard]] const Geometry& geometry() const { return geometry_; }

 private:
  [[nodiscard]] long double at(int i, int j, int k) const { return table_[i + sx_ * (j + sy_ * std::int64_t{k})]; }

  Geometry geometry_;
  std::int64_t sx_ = 0;
  std::int64_t sy_ = 0;
  // Extended precision keeps large-volume box sums within 1e-6 relative.
  std::vector<long double> table_;
};

/// Mean over the border-clipped odd voxel box covering box_mm.
FeatureMap avg_pool(const FeatureMap& map, double box_mm);
/// Maximum over the same box, via separable van Herk / Gil-Werman sliding maxima.
FeatureMap max_pool(const FeatureMap& map, double box_mm);

/// 1D sliding maximum over [t - radius, t + radius] clipped to the line.
void sliding_max(std::span<const double> in, int radius, std::span<double> out);

}  // namespace regmap

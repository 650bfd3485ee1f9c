#pragma once

#include "regmap/volume.hpp"

#include <span>
#include <string>
#include <vector>

namespace regmap {

/// A named scalar map on the fixed grid.
struct FeatureMap {
  std::string name;
  Image values;
  std::string units;  // "mm" or "" (dimensionless)
};

/// Per-voxel sample standard deviation of T_i = x + u_i (n-1 denominator).
FeatureMap std_dvf(std::span<const Field> ensemble, std::string name = "stdT");

/// Per-voxel ||T_b - mean(T_i)||.
FeatureMap bias_map(const Field& t_b, std::span<const Field> ensemble, std::string name = "biasT");

struct CvhOptions {
  int bins = 32;
  double epsilon = 5.0;
};

/// Equal-width bin edges over [lo, hi]; values outside clamp to the end bins.
struct Binning {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 1;

  [[nodiscard]] int index(double v) const {
    if (hi <= lo) return 0;
    const int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    return std::clamp(b, 0, bins - 1);
  }
};

/// Coefficient of variation of the members' joint histograms, CVH = std(H) / (mean(H) + eps),
/// transferred to voxels via the (fixed, base-warped) intensity pair.
FeatureMap cvh(const Image& fixed, std::span<const Image> warped_ensemble, const Image& base_warped,
               const CvhOptions& opt = {});

/// The B x B coefficient-of-variation table itself (row = fixed bin, col = warped bin).
Eigen::MatrixXd cvh_table(const Image& fixed, std::span<const Image> warped_ensemble, const Binning& binning,
                          double epsilon);

/// det(I + du/dx) with central differences in mm, one-sided at the borders.
FeatureMap jacobian_det(const Field& dvf, std::string name = "jac");

}  // namespace regmap

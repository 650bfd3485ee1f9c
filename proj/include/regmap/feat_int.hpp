#pragma once

#include "regmap/feat_reg.hpp"
#include "regmap/volume.hpp"

#include <span>
#include <utility>
#include <vector>

namespace regmap {

/// Sparse self-similarity offsets (voxels) and the patch used for patch distances.
struct MindPattern {
  std::vector<Index3> offsets;
  Index3 box = Index3(7, 7, 3);
  int patch_radius = 1;  // 3x3x3 patch

  /// 82 offsets inside a 7x7x3 box, center excluded: the full 7x7 in-plane
  /// ring minus the center (48) plus 17 offsets on each adjacent plane.
  static MindPattern sparse82(int short_axis = 2);

  /// The 82-offset pattern with its 3-voxel axis along the coarsest spacing.
  static MindPattern for_spacing(const Point3& spacing);
};

/// 82 x N descriptor: exp(-(D_r - min_r D_r) / mean_r D_r), all components in (0, 1].
Eigen::MatrixXf mind_descriptor(const Image& img, const MindPattern& pattern);

/// Per-voxel L1 distance between the MIND descriptors of the two volumes.
FeatureMap mind_distance(const Image& fixed, const Image& warped, const MindPattern& pattern);

enum class MiBinning { Constant, Sturges };

/// floor(log2(n) + 1)
int sturges_bins(std::int64_t n);

struct MiTerms {
  double h_fixed = 0.0;
  double h_moving = 0.0;
  double h_joint = 0.0;
  double nmi = 1.0;
  double pmi = 0.0;
};

/// Entropies of a row-major B_f x B_m joint count table. NMI = (H_f + H_m) / H_fm,
/// PMI = (H_f + H_m - H_fm) / min(H_f, H_m). Zero denominators give NMI = 1, PMI = 0.
MiTerms mi_terms(std::span<const double> joint, int bins_fixed, int bins_moving, double log_base = 0.0);

/// NMI/PMI over the border-clipped box (diameter box_mm) around each location.
/// Bins are equal-width over each box's own intensity range.
std::vector<std::pair<double, double>> local_mi_at(const Image& fixed, const Image& warped, double box_mm,
                                                   MiBinning binning, std::span<const Index3> locations,
                                                   int constant_bins = 32);

/// Dense NMI and PMI maps.
std::pair<FeatureMap, FeatureMap> local_mi(const Image& fixed, const Image& warped, double box_mm, MiBinning binning,
                                           int constant_bins = 32);

/// SID = G_sigma * (f - w)^2, GID = |grad(G_sigma * (f - w))|; sigma in mm.
std::pair<FeatureMap, FeatureMap> sid_gid(const Image& fixed, const Image& warped, double sigma_mm);

/// Pearson correlation over the clipped box; 0 when either variance is below 1e-12.
std::vector<double> nc_at(const Image& fixed, const Image& warped, double box_mm, std::span<const Index3> locations);
FeatureMap nc(const Image& fixed, const Image& warped, double box_mm);

/// Every voxel index of a geometry, x-fastest.
std::vector<Index3> all_voxels(const Geometry& g);

}  // namespace regmap

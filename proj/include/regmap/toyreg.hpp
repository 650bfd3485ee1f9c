#pragma once

#include "regmap/bspline.hpp"
#include "regmap/volume.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace regmap {

/// Settings of the multi-resolution B-spline registration (SSD cost, gradient descent).
struct RegConfig {
  int resolutions = 3;
  int iterations = 100;            // per resolution
  double step_mm = 1.0;            // largest coefficient update per step at the finest level
  double sampling_fraction = 0.01; // voxels drawn per iteration
  int min_samples = 1000;
  Point3 grid_spacing = Point3::Constant(10.0);  // final control spacing, mm
  std::uint64_t seed = 0;

  void validate() const;
};

/// Accepted steps: SSD on the iteration's sample before and after the update.
struct RegTrace {
  struct Step {
    int level;
    int iteration;
    double cost_before;
    double cost_after;
  };
  std::vector<Step> accepted;
  int rejected = 0;
};

/// Image pyramids shared by every registration of one fixed/moving pair.
class RegistrationContext {
 public:
  struct Level {
    Image fixed;
    Image moving;
    std::array<Image, 3> moving_gradient;
  };

  RegistrationContext(const Image& fixed, const Image& moving, int resolutions);

  [[nodiscard]] int levels() const { return static_cast<int>(levels_.size()); }
  [[nodiscard]] const Level& level(int l) const { return levels_[l]; }
  [[nodiscard]] const Geometry& fixed_geometry() const { return levels_[0].fixed.geometry(); }
  /// Voxel-center bounding region of all fixed levels; every control grid covers it.
  [[nodiscard]] const Geometry& support() const { return support_; }

 private:
  std::vector<Level> levels_;
  Geometry support_;
};

/// Zero grid with the layout register_images returns for this fixed image and config.
BSplineGrid registration_grid(const Geometry& fixed, const RegConfig& cfg);
BSplineGrid registration_grid(const RegistrationContext& ctx, const RegConfig& cfg);

/// Minimizes SSD over B-spline coefficients added on top of `init`.
/// Returns init + optimized coefficients on the final grid.
BSplineGrid register_images(const RegistrationContext& ctx, const RegConfig& cfg, const BSplineGrid& init,
                            RegTrace* trace = nullptr);
BSplineGrid register_images(const Image& fixed, const Image& moving, const RegConfig& cfg, const BSplineGrid& init,
                            RegTrace* trace = nullptr);

/// P full multi-resolution registrations from perturbed zero initializations.
std::vector<Field> ensemble_initial(const RegistrationContext& ctx, const RegConfig& cfg, int members,
                                    double range_mm, std::uint64_t seed);

/// P single-resolution re-registrations started from perturbations of t_b.
std::vector<Field> ensemble_base(const RegistrationContext& ctx, const RegConfig& cfg, const BSplineGrid& t_b,
                                 int members, double range_mm, std::uint64_t seed);

}  // namespace regmap

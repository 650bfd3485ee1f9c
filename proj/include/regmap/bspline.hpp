#pragma once

#include "regmap/volume.hpp"

#include <array>
#include <cstdint>

namespace regmap {

/// Uniform cubic B-spline basis on u in [0, 1); weights for control points floor(t)-1 .. floor(t)+2.
inline std::array<double, 4> cubic_bspline_weights(double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double v = 1.0 - u;
  return {v * v * v / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0, (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0};
}

/// Cubic B-spline kernel value at a signed distance (in control spacings).
inline double cubic_bspline(double t) {
  const double a = std::abs(t);
  if (a < 1.0) return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
  if (a < 2.0) return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
  return 0.0;
}

/// Control grid of a cubic B-spline free-form deformation.
/// Control point (a, b, c) sits at origin + (a, b, c) * spacing.
struct BSplineGrid {
  Point3 spacing = Point3::Constant(10.0);
  Point3 origin = Point3::Zero();
  Index3 dims = Index3::Constant(4);
  Eigen::Matrix3Xd coefficients;

  /// Zero grid with one cell of margin before the volume and enough after it.
  static BSplineGrid covering(const Geometry& g, const Point3& control_spacing);

  [[nodiscard]] std::int64_t size() const { return std::int64_t{dims.x()} * dims.y() * dims.z(); }
  [[nodiscard]] std::int64_t linear(int a, int b, int c) const {
    return a + std::int64_t{dims.x()} * (b + std::int64_t{dims.y()} * c);
  }
  [[nodiscard]] bool covers(const Geometry& g) const;
  [[nodiscard]] bool same_layout(const BSplineGrid& o) const {
    return dims == o.dims && (spacing - o.spacing).cwiseAbs().maxCoeff() < 1e-9 &&
           (origin - o.origin).cwiseAbs().maxCoeff() < 1e-9;
  }

  /// Displacement at an arbitrary world point inside the covered region.
  [[nodiscard]] Eigen::Vector3d evaluate(const Point3& p) const;
};

/// Dense evaluation at every voxel center (separable tensor contraction).
Field grid_to_dvf(const BSplineGrid& grid, const Geometry& geometry);

/// Adds i.i.d. uniform [-range, range] offsets to every coefficient component.
BSplineGrid perturb_grid(const BSplineGrid& grid, double range_mm, std::uint64_t seed);

/// Exact dyadic refinement onto a grid with half the spacing covering `g`.
BSplineGrid refine_grid(const BSplineGrid& coarse, const Geometry& g);

}  // namespace regmap

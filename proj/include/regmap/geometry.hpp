#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace regmap {

using Index3 = Eigen::Vector3i;
using Point3 = Eigen::Vector3d;

/// Axis-aligned voxel grid: world = origin + index * spacing.
struct Geometry {
  Index3 dims = Index3::Ones();
  Point3 spacing = Point3::Ones();
  Point3 origin = Point3::Zero();

  Geometry() = default;
  Geometry(Index3 d, Point3 s, Point3 o = Point3::Zero()) : dims(std::move(d)), spacing(std::move(s)), origin(std::move(o)) {
    validate();
  }

  void validate() const {
    if ((dims.array() < 1).any()) throw std::invalid_argument("geometry: dims must be positive");
    if (!(spacing.array() > 0.0).all() || !spacing.allFinite())
      throw std::invalid_argument("geometry: spacing must be strictly positive");
    if (!origin.allFinite()) throw std::invalid_argument("geometry: origin must be finite");
  }

  [[nodiscard]] std::int64_t voxel_count() const {
    return std::int64_t{dims.x()} * dims.y() * dims.z();
  }

  [[nodiscard]] std::int64_t linear(int i, int j, int k) const {
    return i + std::int64_t{dims.x()} * (j + std::int64_t{dims.y()} * k);
  }
  [[nodiscard]] std::int64_t linear(const Index3& idx) const { return linear(idx.x(), idx.y(), idx.z()); }

  [[nodiscard]] Index3 unravel(std::int64_t n) const {
    const std::int64_t nx = dims.x();
    const std::int64_t ny = dims.y();
    return {static_cast<int>(n % nx), static_cast<int>((n / nx) % ny), static_cast<int>(n / (nx * ny))};
  }

  [[nodiscard]] bool contains_index(const Index3& idx) const {
    return (idx.array() >= 0).all() && (idx.array() < dims.array()).all();
  }

  template <typename Derived>
  [[nodiscard]] Point3 to_world(const Eigen::MatrixBase<Derived>& index) const {
    return origin + index.template cast<double>().cwiseProduct(spacing);
  }

  [[nodiscard]] Point3 to_continuous_index(const Point3& world) const {
    return (world - origin).cwiseQuotient(spacing);
  }

  [[nodiscard]] Index3 nearest_index(const Point3& world) const {
    const Point3 c = to_continuous_index(world);
    return c.array().round().cast<int>().matrix();
  }

  /// Voxel-center bounding box [origin, origin + (dims-1)*spacing].
  [[nodiscard]] Point3 last_center() const {
    return origin + (dims.array() - 1).cast<double>().matrix().cwiseProduct(spacing);
  }

  [[nodiscard]] bool contains_world(const Point3& p, double tol = 1e-6) const {
    const Point3 hi = last_center();
    return ((p.array() >= origin.array() - tol).all()) && ((p.array() <= hi.array() + tol).all());
  }

  [[nodiscard]] bool same_as(const Geometry& other, double tol = 1e-6) const {
    return dims == other.dims && (spacing - other.spacing).cwiseAbs().maxCoeff() <= tol &&
           (origin - other.origin).cwiseAbs().maxCoeff() <= tol;
  }

  friend bool operator==(const Geometry& a, const Geometry& b) {
    return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin;
  }
};

inline void require_same_geometry(const Geometry& a, const Geometry& b, const char* what) {
  if (!a.same_as(b)) throw std::invalid_argument(std::string(what) + ": geometry mismatch");
}

/// Smallest odd voxel count whose extent covers `mm` at the given spacing.
inline int odd_cover(double mm, double spacing) {
  // 1e-9 guards exact multiples such as 7.5 / 2.5 against rounding up.
  int n = static_cast<int>(std::ceil(mm / spacing - 1e-9));
  n = std::max(n, 1);
  return n % 2 == 0 ? n + 1 : n;
}

/// Odd voxel box (per axis) covering a physical diameter.
inline Index3 box_voxels(const Point3& spacing, const Point3& box_mm) {
  return {odd_cover(box_mm.x(), spacing.x()), odd_cover(box_mm.y(), spacing.y()), odd_cover(box_mm.z(), spacing.z())};
}

inline Index3 box_voxels(const Point3& spacing, double box_mm) {
  return box_voxels(spacing, Point3::Constant(box_mm));
}

/// Inclusive voxel range of an odd box centered at `center`, clipped to the grid.
struct VoxelBox {
  Index3 lo;
  Index3 hi;

  [[nodiscard]] std::int64_t count() const {
    const Index3 n = (hi - lo).array() + 1;
    return std::int64_t{n.x()} * n.y() * n.z();
  }
};

inline VoxelBox clipped_box(const Geometry& g, const Index3& center, const Index3& box) {
  const Index3 radius = box / 2;
  VoxelBox b;
  b.lo = (center - radius).cwiseMax(Index3::Zero());
  b.hi = (center + radius).cwiseMin(g.dims - Index3::Ones());
  return b;
}

}  // namespace regmap

#pragma once

#include "regmap/geometry.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace regmap {

/// Dense 3D scalar grid, x-fastest storage.
template <typename Scalar>
class Volume {
 public:
  using Data = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Volume() = default;

  explicit Volume(Geometry geometry, Scalar fill = Scalar(0))
      : geometry_(std::move(geometry)), data_(Data::Constant(geometry_.voxel_count(), fill)) {
    geometry_.validate();
  }

  Volume(Geometry geometry, Data data) : geometry_(std::move(geometry)), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.voxel_count()) throw std::invalid_argument("volume: data length does not match dims");
    if (!data_.allFinite()) throw std::invalid_argument("volume: non-finite intensity");
  }

  [[nodiscard]] const Geometry& geometry() const { return geometry_; }
  [[nodiscard]] const Index3& dims() const { return geometry_.dims; }
  [[nodiscard]] const Point3& spacing() const { return geometry_.spacing; }
  [[nodiscard]] const Point3& origin() const { return geometry_.origin; }
  [[nodiscard]] std::int64_t size() const { return data_.size(); }

  [[nodiscard]] const Data& data() const { return data_; }
  [[nodiscard]] Data& data() { return data_; }

  Scalar& operator()(int i, int j, int k) { return data_[geometry_.linear(i, j, k)]; }
  const Scalar& operator()(int i, int j, int k) const { return data_[geometry_.linear(i, j, k)]; }
  Scalar& operator[](std::int64_t n) { return data_[n]; }
  const Scalar& operator[](std::int64_t n) const { return data_[n]; }
  const Scalar& at(const Index3& idx) const { return data_[geometry_.linear(idx)]; }

  /// Voxel access with indices clamped to the grid.
  [[nodiscard]] Scalar clamped(int i, int j, int k) const {
    i = std::clamp(i, 0, geometry_.dims.x() - 1);
    j = std::clamp(j, 0, geometry_.dims.y() - 1);
    k = std::clamp(k, 0, geometry_.dims.z() - 1);
    return (*this)(i, j, k);
  }

  template <typename Other>
  [[nodiscard]] Volume<Other> cast() const {
    Volume<Other> out(geometry_);
    out.data() = data_.template cast<Other>();
    return out;
  }

 private:
  Geometry geometry_;
  Data data_;
};

using Image = Volume<double>;

/// Per-voxel displacement u(x) in mm; the transform is T(x) = x + u(x).
template <typename Scalar>
class DisplacementField {
 public:
  using Vectors = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

  DisplacementField() = default;

  explicit DisplacementField(Geometry geometry)
      : geometry_(std::move(geometry)), vectors_(Vectors::Zero(3, geometry_.voxel_count())) {
    geometry_.validate();
  }

  DisplacementField(Geometry geometry, Vectors vectors) : geometry_(std::move(geometry)), vectors_(std::move(vectors)) {
    geometry_.validate();
    if (vectors_.cols() != geometry_.voxel_count())
      throw std::invalid_argument("displacement field: vector count does not match dims");
    if (!vectors_.allFinite()) throw std::invalid_argument("displacement field: non-finite component");
  }

  [[nodiscard]] const Geometry& geometry() const { return geometry_; }
  [[nodiscard]] const Vectors& vectors() const { return vectors_; }
  [[nodiscard]] Vectors& vectors() { return vectors_; }
  [[nodiscard]] std::int64_t size() const { return vectors_.cols(); }

  [[nodiscard]] auto operator[](std::int64_t n) { return vectors_.col(n); }
  [[nodiscard]] auto operator[](std::int64_t n) const { return vectors_.col(n); }

  /// One displacement component as a scalar volume.
  [[nodiscard]] Volume<Scalar> component(int axis) const {
    Volume<Scalar> out(geometry_);
    out.data() = vectors_.row(axis).transpose().array();
    return out;
  }

  static DisplacementField from_components(const Volume<Scalar>& dx, const Volume<Scalar>& dy,
                                           const Volume<Scalar>& dz) {
    require_same_geometry(dx.geometry(), dy.geometry(), "displacement field");
    require_same_geometry(dx.geometry(), dz.geometry(), "displacement field");
    Vectors v(3, dx.size());
    v.row(0) = dx.data().matrix().transpose();
    v.row(1) = dy.data().matrix().transpose();
    v.row(2) = dz.data().matrix().transpose();
    return DisplacementField(dx.geometry(), std::move(v));
  }

 private:
  Geometry geometry_;
  Vectors vectors_;
};

using Field = DisplacementField<double>;

namespace detail {

struct TrilinearStencil {
  std::int64_t offsets[8];
  double weights[8];
};

/// Clamp-to-edge trilinear stencil at a continuous index.
inline TrilinearStencil trilinear_stencil(const Geometry& g, Point3 c) {
  TrilinearStencil s{};
  int lo[3];
  int hi[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double upper = static_cast<double>(g.dims[a] - 1);
    double v = std::clamp(c[a], 0.0, upper);
    // Snap round-off so voxel centers reproduce stored values exactly.
    const double r = std::round(v);
    if (std::abs(v - r) < 1e-9) v = r;
    const int i0 = static_cast<int>(std::floor(v));
    lo[a] = i0;
    hi[a] = std::min(i0 + 1, g.dims[a] - 1);
    f[a] = v - i0;
  }
  int n = 0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx, ++n) {
        const int i = dx ? hi[0] : lo[0];
        const int j = dy ? hi[1] : lo[1];
        const int k = dz ? hi[2] : lo[2];
        s.offsets[n] = g.linear(i, j, k);
        s.weights[n] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
      }
    }
  }
  return s;
}

}  // namespace detail

/// Trilinear interpolation at a world point; outside points clamp to the edge.
template <typename Scalar>
double trilinear_sample(const Volume<Scalar>& v, const Point3& p) {
  const auto s = detail::trilinear_stencil(v.geometry(), v.geometry().to_continuous_index(p));
  double acc = 0.0;
  for (int n = 0; n < 8; ++n) acc += s.weights[n] * static_cast<double>(v[s.offsets[n]]);
  return acc;
}

template <typename Scalar>
Eigen::Vector3d trilinear_sample(const DisplacementField<Scalar>& f, const Point3& p) {
  const auto s = detail::trilinear_stencil(f.geometry(), f.geometry().to_continuous_index(p));
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int n = 0; n < 8; ++n) acc += s.weights[n] * f[s.offsets[n]].template cast<double>();
  return acc;
}

/// Backward warp: out(x) = moving(x + u(x)) on the field's grid.
template <typename Scalar, typename FieldScalar>
Volume<Scalar> warp(const Volume<Scalar>& moving, const DisplacementField<FieldScalar>& dvf) {
  const Geometry& g = dvf.geometry();
  Volume<Scalar> out(g);
  const std::int64_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    const Point3 x = g.to_world(g.unravel(v));
    const Point3 y = x + dvf[v].template cast<double>();
    out[v] = static_cast<Scalar>(trilinear_sample(moving, y));
  }
  return out;
}

/// Warp onto an explicit fixed grid; the field must live on that grid.
template <typename Scalar, typename FieldScalar>
Volume<Scalar> warp(const Volume<Scalar>& moving, const DisplacementField<FieldScalar>& dvf, const Geometry& fixed) {
  require_same_geometry(dvf.geometry(), fixed, "warp");
  return warp(moving, dvf);
}

}  // namespace regmap

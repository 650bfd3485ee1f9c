#include "regmap/bspline.hpp"

#include "regmap/random.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace regmap {
namespace {

struct AxisWeights {
  std::vector<int> base;  // first control index (floor(t) - 1)
  std::vector<std::array<double, 4>> w;
};

AxisWeights axis_weights(const BSplineGrid& grid, const Geometry& g, int axis) {
  AxisWeights aw;
  const int n = g.dims[axis];
  aw.base.resize(n);
  aw.w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = g.origin[axis] + i * g.spacing[axis];
    const double t = (x - grid.origin[axis]) / grid.spacing[axis];
    double f = std::floor(t);
    double u = t - f;
    // Round-off just below an integer knot.
    if (u > 1.0 - 1e-12) {
      f += 1.0;
      u = 0.0;
    }
    aw.base[i] = static_cast<int>(f) - 1;
    aw.w[i] = cubic_bspline_weights(u);
  }
  return aw;
}

}  // namespace

BSplineGrid BSplineGrid::covering(const Geometry& g, const Point3& control_spacing) {
  if (!(control_spacing.array() > 0.0).all()) throw std::invalid_argument("bspline: control spacing must be positive");
  BSplineGrid grid;
  grid.spacing = control_spacing;
  grid.origin = g.origin - control_spacing;
  const Point3 extent = g.last_center() - g.origin;
  for (int a = 0; a < 3; ++a) grid.dims[a] = static_cast<int>(std::floor(extent[a] / control_spacing[a] + 1e-9)) + 4;
  grid.coefficients = Eigen::Matrix3Xd::Zero(3, grid.size());
  return grid;
}

bool BSplineGrid::covers(const Geometry& g) const {
  if (coefficients.cols() != size()) return false;
  for (int a = 0; a < 3; ++a) {
    for (double x : {g.origin[a], g.last_center()[a]}) {
      const double t = (x - origin[a]) / spacing[a];
      const int f = static_cast<int>(std::floor(t + 1e-12));
      if (f - 1 < 0 || f + 2 > dims[a] - 1) return false;
    }
  }
  return true;
}

Eigen::Vector3d BSplineGrid::evaluate(const Point3& p) const {
  int base[3];
  std::array<double, 4> w[3];
  for (int a = 0; a < 3; ++a) {
    const double t = (p[a] - origin[a]) / spacing[a];
    const double f = std::floor(t);
    base[a] = static_cast<int>(f) - 1;
    w[a] = cubic_bspline_weights(t - f);
  }
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  for (int c = 0; c < 4; ++c) {
    const int kc = base[2] + c;
    if (kc < 0 || kc >= dims.z()) continue;
    for (int b = 0; b < 4; ++b) {
      const int kb = base[1] + b;
      if (kb < 0 || kb >= dims.y()) continue;
      const double wbc = w[1][b] * w[2][c];
      for (int a = 0; a < 4; ++a) {
        const int ka = base[0] + a;
        if (ka < 0 || ka >= dims.x()) continue;
        u += (w[0][a] * wbc) * coefficients.col(linear(ka, kb, kc));
      }
    }
  }
  return u;
}

Field grid_to_dvf(const BSplineGrid& grid, const Geometry& g) {
  if (!grid.covers(g)) throw std::invalid_argument("grid_to_dvf: grid does not cover volume");
  const AxisWeights wx = axis_weights(grid, g, 0);
  const AxisWeights wy = axis_weights(grid, g, 1);
  const AxisWeights wz = axis_weights(grid, g, 2);
  const int nx = g.dims.x(), ny = g.dims.y(), nz = g.dims.z();
  const int gy = grid.dims.y(), gz = grid.dims.z();

  // Contract x, then y, then z.
  Eigen::Matrix3Xd a_stage = Eigen::Matrix3Xd::Zero(3, std::int64_t{nx} * gy * gz);
  for (int c = 0; c < gz; ++c)
    for (int b = 0; b < gy; ++b)
      for (int i = 0; i < nx; ++i) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (int q = 0; q < 4; ++q) acc += wx.w[i][q] * grid.coefficients.col(grid.linear(wx.base[i] + q, b, c));
        a_stage.col(i + std::int64_t{nx} * (b + std::int64_t{gy} * c)) = acc;
      }

  Eigen::Matrix3Xd b_stage = Eigen::Matrix3Xd::Zero(3, std::int64_t{nx} * ny * gz);
  for (int c = 0; c < gz; ++c)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (int q = 0; q < 4; ++q)
          acc += wy.w[j][q] * a_stage.col(i + std::int64_t{nx} * ((wy.base[j] + q) + std::int64_t{gy} * c));
        b_stage.col(i + std::int64_t{nx} * (j + std::int64_t{ny} * c)) = acc;
      }

  Field out(g);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (int q = 0; q < 4; ++q)
          acc += wz.w[k][q] * b_stage.col(i + std::int64_t{nx} * (j + std::int64_t{ny} * (wz.base[k] + q)));
        out[g.linear(i, j, k)] = acc;
      }
  return out;
}

BSplineGrid perturb_grid(const BSplineGrid& grid, double range_mm, std::uint64_t seed) {
  if (range_mm < 0.0) throw std::invalid_argument("perturb_grid: range must be >= 0");
  BSplineGrid out = grid;
  if (range_mm == 0.0) return out;
  Rng rng(derive_seed(seed, {3}));
  std::uniform_real_distribution<double> u(-range_mm, range_mm);
  for (Eigen::Index c = 0; c < out.coefficients.cols(); ++c)
    for (int a = 0; a < 3; ++a) out.coefficients(a, c) += u(rng);
  return out;
}

BSplineGrid refine_grid(const BSplineGrid& coarse, const Geometry& g) {
  BSplineGrid fine = BSplineGrid::covering(g, 0.5 * coarse.spacing);
  // Per axis: fine control j sits at coarse coordinate tau0 + j/2.
  std::array<std::vector<std::array<std::pair<int, double>, 3>>, 3> rules;
  for (int a = 0; a < 3; ++a) {
    const double twice = 2.0 * (fine.origin[a] - coarse.origin[a]) / coarse.spacing[a];
    const double r = std::round(twice);
    if (std::abs(twice - r) > 1e-6) throw std::invalid_argument("refine_grid: grids are not dyadically aligned");
    const int t0 = static_cast<int>(r);
    rules[a].resize(fine.dims[a]);
    for (int j = 0; j < fine.dims[a]; ++j) {
      const int h = t0 + j;  // 2 * coarse coordinate
      if (h % 2 == 0) {
        const int k = h / 2;
        rules[a][j] = {{{k - 1, 1.0 / 8.0}, {k, 6.0 / 8.0}, {k + 1, 1.0 / 8.0}}};
      } else {
        const int k = (h - 1) / 2;
        rules[a][j] = {{{k, 0.5}, {k + 1, 0.5}, {k + 1, 0.0}}};
      }
    }
  }
  for (int c = 0; c < fine.dims.z(); ++c)
    for (int b = 0; b < fine.dims.y(); ++b)
      for (int a = 0; a < fine.dims.x(); ++a) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (const auto& [kz, wz] : rules[2][c]) {
          if (wz == 0.0 || kz < 0 || kz >= coarse.dims.z()) continue;
          for (const auto& [ky, wy] : rules[1][b]) {
            if (wy == 0.0 || ky < 0 || ky >= coarse.dims.y()) continue;
            for (const auto& [kx, wx] : rules[0][a]) {
              if (wx == 0.0 || kx < 0 || kx >= coarse.dims.x()) continue;
              acc += (wx * wy * wz) * coarse.coefficients.col(coarse.linear(kx, ky, kz));
            }
          }
        }
        fine.coefficients.col(fine.linear(a, b, c)) = acc;
      }
  return fine;
}

}  // namespace regmap

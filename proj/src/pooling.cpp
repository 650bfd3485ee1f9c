#include "regmap/pooling.hpp"

#include "regmap/filters.hpp"

#include <limits>
#include <sstream>
#include <vector>

namespace regmap {
namespace {

std::string box_suffix(double box_mm) {
  std::ostringstream s;
  s << box_mm;
  return s.str();
}

}  // namespace

IntegralVolume::IntegralVolume(const Image& map)
    : geometry_(map.geometry()), sx_(map.dims().x() + 1), sy_(map.dims().y() + 1) {
  const Index3& d = map.dims();
  table_.assign(static_cast<std::size_t>(sx_ * sy_ * (d.z() + 1)), 0.0L);
  for (int k = 0; k < d.z(); ++k)
    for (int j = 0; j < d.y(); ++j) {
      long double row = 0.0L;
      for (int i = 0; i < d.x(); ++i) {
        row += map(i, j, k);
        const std::int64_t o = (i + 1) + sx_ * ((j + 1) + sy_ * std::int64_t{k + 1});
        // row prefix + (j-1 plane) + (k-1 plane) - (j-1, k-1)
        table_[o] = row + table_[o - sx_] + table_[o - sx_ * sy_] - table_[o - sx_ - sx_ * sy_];
      }
    }
}

double IntegralVolume::box_sum(const Index3& lo, const Index3& hi) const {
  const int x0 = lo.x(), y0 = lo.y(), z0 = lo.z();
  const int x1 = hi.x() + 1, y1 = hi.y() + 1, z1 = hi.z() + 1;
  return static_cast<double>(at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) +
                             at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0));
}

FeatureMap avg_pool(const FeatureMap& map, double box_mm) {
  if (!(box_mm > 0.0)) throw std::invalid_argument("avg_pool: box must be positive");
  const Geometry& g = map.values.geometry();
  const Index3 box = box_voxels(g.spacing, box_mm);
  const IntegralVolume table(map.values);
  Image out(g);
  const std::int64_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    const VoxelBox b = clipped_box(g, g.unravel(v), box);
    out[v] = table.box_sum(b) / static_cast<double>(b.count());
  }
  return {map.name + "_avg" + box_suffix(box_mm), std::move(out), map.units};
}

void sliding_max(std::span<const double> in, int radius, std::span<double> out) {
  const int n = static_cast<int>(in.size());
  if (radius <= 0 || n == 0) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  // van Herk / Gil-Werman on the line padded with -inf by `radius` on both sides.
  const int w = 2 * radius + 1;
  const int padded = n + 2 * radius;
  const int blocks = (padded + w - 1) / w;
  const int len = blocks * w;
  constexpr double lowest = -std::numeric_limits<double>::infinity();
  std::vector<double> f(len, lowest);
  for (int t = 0; t < n; ++t) f[t + radius] = in[t];
  std::vector<double> prefix(len);
  std::vector<double> suffix(len);
  for (int b = 0; b < blocks; ++b) {
    const int s = b * w;
    prefix[s] = f[s];
    for (int t = s + 1; t < s + w; ++t) prefix[t] = std::max(prefix[t - 1], f[t]);
    suffix[s + w - 1] = f[s + w - 1];
    for (int t = s + w - 2; t >= s; --t) suffix[t] = std::max(suffix[t + 1], f[t]);
  }
  // Window over padded positions [t, t + w - 1] is centered on input t.
  for (int t = 0; t < n; ++t) out[t] = std::max(suffix[t], prefix[t + w - 1]);
}

FeatureMap max_pool(const FeatureMap& map, double box_mm) {
  if (!(box_mm > 0.0)) throw std::invalid_argument("max_pool: box must be positive");
  const Geometry& g = map.values.geometry();
  const Index3 box = box_voxels(g.spacing, box_mm);
  Image cur = map.values;
  for (int a = 0; a < 3; ++a) {
    const int r = box[a] / 2;
    if (r == 0) continue;
    cur = apply_along_axis(cur, a, [r](std::span<const double> s, std::span<double> d) { sliding_max(s, r, d); });
  }
  return {map.name + "_max" + box_suffix(box_mm), std::move(cur), map.units};
}

}  // namespace regmap

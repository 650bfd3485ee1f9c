#include "regmap/filters.hpp"

#include <cmath>
#include <stdexcept>

namespace regmap {
namespace {

void convolve_line(std::span<const double> src, std::span<double> dst, const std::vector<double>& kernel) {
  const int n = static_cast<int>(src.size());
  const int r = static_cast<int>(kernel.size() / 2);
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int q = -r; q <= r; ++q) acc += kernel[q + r] * src[std::clamp(t - q, 0, n - 1)];
    dst[t] = acc;
  }
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma_voxels) {
  if (!(sigma_voxels > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_voxels)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int q = -r; q <= r; ++q) {
    k[q + r] = std::exp(-0.5 * (q * q) / (sigma_voxels * sigma_voxels));
    sum += k[q + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

Image convolve_separable(const Image& in, const std::array<std::vector<double>, 3>& kernels) {
  Image cur = in;
  for (int axis = 0; axis < 3; ++axis) {
    if (kernels[axis].empty()) continue;
    if (kernels[axis].size() % 2 == 0) throw std::invalid_argument("convolve_separable: kernel length must be odd");
    const auto& k = kernels[axis];
    cur = apply_along_axis(cur, axis, [&](std::span<const double> s, std::span<double> d) { convolve_line(s, d, k); });
  }
  return cur;
}

Image gaussian_smooth(const Image& in, double sigma_mm) {
  std::array<std::vector<double>, 3> k;
  for (int a = 0; a < 3; ++a) k[a] = gaussian_kernel(sigma_mm / in.spacing()[a]);
  return convolve_separable(in, k);
}

Image gaussian_derivative(const Image& in, double sigma_mm, int axis) {
  std::array<std::vector<double>, 3> k;
  for (int a = 0; a < 3; ++a) k[a] = gaussian_kernel(sigma_mm / in.spacing()[a]);
  // Convolve the Gaussian with [1, 0, -1] / (2h): d/dx of the smoothed signal.
  const auto& g = k[axis];
  const double h = in.spacing()[axis];
  std::vector<double> d(g.size() + 2, 0.0);
  for (std::size_t q = 0; q < g.size(); ++q) {
    d[q] += g[q] / (2.0 * h);
    d[q + 2] -= g[q] / (2.0 * h);
  }
  k[axis] = std::move(d);
  return convolve_separable(in, k);
}

std::array<Image, 3> gradient(const Image& in) {
  std::array<Image, 3> out;
  for (int axis = 0; axis < 3; ++axis) {
    const double h = in.spacing()[axis];
    out[axis] = apply_along_axis(in, axis, [h](std::span<const double> s, std::span<double> d) {
      const int n = static_cast<int>(s.size());
      if (n == 1) {
        d[0] = 0.0;
        return;
      }
      d[0] = (s[1] - s[0]) / h;
      d[n - 1] = (s[n - 1] - s[n - 2]) / h;
      for (int t = 1; t < n - 1; ++t) d[t] = (s[t + 1] - s[t - 1]) / (2.0 * h);
    });
  }
  return out;
}

Image downsample2(const Image& in) {
  const Geometry& g = in.geometry();
  std::array<std::vector<double>, 3> k;
  for (int a = 0; a < 3; ++a) k[a] = gaussian_kernel(1.0);
  const Image smooth = convolve_separable(in, k);

  Geometry coarse;
  coarse.dims = ((g.dims.array() + 1) / 2).max(1);
  coarse.spacing = 2.0 * g.spacing;
  coarse.origin = g.origin + 0.5 * g.spacing;
  Image out(coarse);
  const std::int64_t n = coarse.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) out[v] = trilinear_sample(smooth, coarse.to_world(coarse.unravel(v)));
  return out;
}

}  // namespace regmap

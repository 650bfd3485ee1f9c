#pragma once

#include <vector>

namespace regmap {

template <typename Fn>
Image apply_along_axis(const Image& in, int axis, Fn&& fn) {
  const Geometry& g = in.geometry();
  const int n = g.dims[axis];
  const int a1 = (axis + 1) % 3;
  const int a2 = (axis + 2) % 3;
  const int n1 = g.dims[a1];
  const int n2 = g.dims[a2];
  std::int64_t stride = 1;
  for (int a = 0; a < axis; ++a) stride *= g.dims[a];

  Image out(g);
  const std::int64_t lines = std::int64_t{n1} * n2;
#pragma omp parallel
  {
    std::vector<double> src(n);
    std::vector<double> dst(n);
#pragma omp for schedule(static)
    for (std::int64_t l = 0; l < lines; ++l) {
      Index3 idx = Index3::Zero();
      idx[a1] = static_cast<int>(l % n1);
      idx[a2] = static_cast<int>(l / n1);
      const std::int64_t base = g.linear(idx);
      for (int t = 0; t < n; ++t) src[t] = in[base + t * stride];
      fn(std::span<const double>(src), std::span<double>(dst));
      for (int t = 0; t < n; ++t) out[base + t * stride] = dst[t];
    }
  }
  return out;
}

}  // namespace regmap

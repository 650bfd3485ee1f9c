#include "regmap/sampling.hpp"

#include <stdexcept>

namespace regmap {

const char* class_name(ErrorClass c) {
  switch (c) {
    case ErrorClass::Correct: return "correct";
    case ErrorClass::Poor: return "poor";
    case ErrorClass::Wrong: return "wrong";
  }
  return "?";
}

std::vector<std::pair<Point3, double>> landmark_error(const LandmarkPairSet& set, const Field& t_b) {
  const Geometry& g = t_b.geometry();
  std::vector<std::pair<Point3, double>> out;
  out.reserve(set.pairs.size());
  for (const auto& lm : set.pairs) {
    if (!g.contains_world(lm.fixed)) throw std::out_of_range("landmark_error: landmark outside the field geometry");
    const Point3 mapped = lm.fixed + trilinear_sample(t_b, lm.fixed);
    out.emplace_back(lm.fixed, (mapped - lm.moving).norm());
  }
  return out;
}

std::vector<Sample> expand_neighborhood(const std::vector<std::pair<Point3, double>>& landmarks, const Geometry& g,
                                        const std::string& pair_id, const NeighborhoodRule& rule) {
  const Index3 big = box_voxels(g.spacing, rule.box_mm);
  const Index3 small = box_voxels(g.spacing, rule.correct_box_mm);
  std::vector<Sample> out;
  for (const auto& [x, y] : landmarks) {
    if (!g.contains_world(x)) throw std::out_of_range("expand_neighborhood: landmark outside geometry");
    const ErrorClass cls = classify(y);
    const VoxelBox b = clipped_box(g, g.nearest_index(x), cls == ErrorClass::Correct ? small : big);
    for (int k = b.lo.z(); k <= b.hi.z(); ++k)
      for (int j = b.lo.y(); j <= b.hi.y(); ++j)
        for (int i = b.lo.x(); i <= b.hi.x(); ++i) {
          const Index3 idx(i, j, k);
          out.push_back({pair_id, idx, g.to_world(idx), y, cls});
        }
  }
  return out;
}

std::vector<Sample> dense_from_truth(const Image& err, int stride, const std::string& pair_id) {
  if (stride < 1) throw std::invalid_argument("dense_from_truth: stride must be >= 1");
  const Geometry& g = err.geometry();
  std::vector<Sample> out;
  for (int k = 0; k < g.dims.z(); k += stride)
    for (int j = 0; j < g.dims.y(); j += stride)
      for (int i = 0; i < g.dims.x(); i += stride) {
        const Index3 idx(i, j, k);
        const double y = err(i, j, k);
        out.push_back({pair_id, idx, g.to_world(idx), y, classify(y)});
      }
  return out;
}

}  // namespace regmap

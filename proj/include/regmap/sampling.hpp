#pragma once

#include "regmap/io.hpp"
#include "regmap/volume.hpp"

#include <string>
#include <utility>
#include <vector>

namespace regmap {

enum class ErrorClass { Correct = 0, Poor = 1, Wrong = 2 };

/// [0, 3) correct, [3, 6) poor, [6, inf) wrong (mm).
inline ErrorClass classify(double y) {
  if (y < 3.0) return ErrorClass::Correct;
  if (y < 6.0) return ErrorClass::Poor;
  return ErrorClass::Wrong;
}

const char* class_name(ErrorClass c);

struct Sample {
  std::string pair_id;
  Index3 index = Index3::Zero();
  Point3 world = Point3::Zero();
  double y = 0.0;
  ErrorClass cls = ErrorClass::Correct;
};

/// Residual ||x_F + u(x_F) - x_M|| per landmark, u trilinearly interpolated.
std::vector<std::pair<Point3, double>> landmark_error(const LandmarkPairSet& set, const Field& t_b);

/// Neighborhood boxes (mm) around each landmark; correct-class landmarks use the smaller box.
struct NeighborhoodRule {
  Point3 box_mm = Point3(10.0, 10.0, 7.5);
  Point3 correct_box_mm = Point3(5.0, 5.0, 2.5);
};

/// Every voxel of the clipped class-dependent box around each landmark, all with the landmark's y.
/// Overlapping boxes keep their duplicates.
std::vector<Sample> expand_neighborhood(const std::vector<std::pair<Point3, double>>& landmarks, const Geometry& g,
                                        const std::string& pair_id, const NeighborhoodRule& rule = {});

/// Samples on the stride lattice starting at voxel 0, y read from the dense error map.
std::vector<Sample> dense_from_truth(const Image& err, int stride, const std::string& pair_id);

}  // namespace regmap

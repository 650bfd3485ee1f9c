#pragma once

#include "regmap/eval.hpp"
#include "regmap/features.hpp"
#include "regmap/forest.hpp"
#include "regmap/synth.hpp"
#include "regmap/table.hpp"
#include "regmap/toyreg.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace regmap {

struct EnsembleConfig {
  int members = 20;
  double range_mm = 2.0;
};

/// Base transform and, optionally, both perturbation ensembles.
struct RegistrationResult {
  BSplineGrid grid;
  Field t_b;
  std::vector<Field> ensemble_t;
  std::vector<Field> ensemble_tl;
};

/// Registers from a zero grid; ensemble seeds derive from cfg.seed.
RegistrationResult register_pair(const RegistrationContext& ctx, const RegConfig& cfg, const EnsembleConfig& ens,
                                 bool with_ensembles);

/// Feature rows for the given samples of one registration. Ensembles may be
/// empty when the columns do not need them.
SampleTable feature_table(const Image& fixed, const Image& moving, const Field& t_b, std::span<const Field> ensemble_t,
                          std::span<const Field> ensemble_tl, const std::vector<std::string>& columns,
                          std::vector<Sample> samples, const ExtractOptions& opt = {});

struct E2eConfig {
  E2eConfig() { pair.amplitude_mm = 12.0; }

  int pairs = 12;
  PairOptions pair;
  std::vector<int> budgets = {1, 3, 10, 40};  // iterations per resolution
  RegConfig reg;
  EnsembleConfig ensemble;
  int stride = 7;  // dense sampling lattice, voxels
  std::string schema = "combined";
  int folds = 3;
  ForestConfig forest;
  ExtractOptions features;
  std::uint64_t seed = 7;
  bool parity = true;  // misregistration demo on an extra pair

  void validate() const;
};

/// Predicted error inside a deliberately corrupted region versus a converged one.
struct ParityResult {
  int slice = 0;
  double predicted_misregistered = 0.0;
  double predicted_converged = 0.0;
  double true_misregistered = 0.0;
  double true_converged = 0.0;
  std::size_t misregistered_voxels = 0;
  std::size_t converged_voxels = 0;

  [[nodiscard]] double ratio() const { return predicted_misregistered / predicted_converged; }
};

struct E2eResult {
  SampleTable table;
  CvReport cv;
  Eigen::VectorXd importance;
  ParityResult parity;
};

using Logger = std::function<void(const std::string&)>;

/// synth -> register (all budgets) -> ensembles -> features -> sampling ->
/// cross-validation -> final model and importance -> reports, all under `out`.
E2eResult run_e2e(const E2eConfig& cfg, const std::filesystem::path& out, const Logger& log = {});

/// Corrupts the base grid with a smooth displacement bump (peak `bump_mm` along x,
/// radius `radius_mm`) centered at `center` (world mm).
BSplineGrid corrupt_grid(const BSplineGrid& grid, const Point3& center, double radius_mm, double bump_mm);

}  // namespace regmap

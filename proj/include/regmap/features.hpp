#pragma once

#include "regmap/feat_int.hpp"
#include "regmap/feat_reg.hpp"
#include "regmap/volume.hpp"

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace regmap {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A required input (for example the ensembles) was not supplied.
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPoolBoxesMm[] = {2, 5, 10, 15, 20, 25, 30, 35, 40};
inline constexpr double kLocalBoxesMm[] = {5, 10, 15, 20, 25, 30, 35, 40};
inline constexpr double kSigmasMm[] = {0.5, 1, 2, 4, 8, 16};

/// "2", "0.5": the numeric suffix used in column names.
std::string format_size(double mm);

/// <mother>_avg<box> for the 9 boxes, then <mother>_max<box>.
std::vector<std::string> pooled_columns(const std::string& mother);

/// Ordered column names of a named schema: intensity, registration, combined,
/// combined+md, no-pooling or single:<mother>. Throws SchemaError.
std::vector<std::string> schema_columns(const std::string& schema);

/// One column decoded from its name.
struct ColumnSpec {
  enum class Kind { Plain, AvgPool, MaxPool, Nmi, Nmis, Pmi, Pmis, Nc, Sid, Gid };
  Kind kind = Kind::Plain;
  std::string mother;  // plain and pooled columns
  double size = 0.0;   // box (mm) or sigma (mm)
};

ColumnSpec parse_column(const std::string& name);

/// True when any column depends on the registration ensembles.
bool needs_ensembles(std::span<const std::string> columns);

/// Everything one pair/registration contributes, all on the fixed grid.
/// Intensity columns need fixed, warped; registration columns also need the
/// base field and both ensembles.
struct PairInputs {
  const Image* fixed = nullptr;
  const Image* warped = nullptr;  // moving resampled by the base transform
  const Field* t_b = nullptr;
  std::span<const Field> ensemble_t;   // perturbed initializations
  std::span<const Field> ensemble_tl;  // perturbed base re-registrations
  std::span<const Image> warped_t;     // moving resampled by each ensemble_t member
};

struct ExtractOptions {
  CvhOptions cvh;
  int mi_bins = 32;
};

/// Computes requested columns at voxel locations. Unpooled mother maps are
/// cached; pooled maps are built one at a time and only sampled.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(PairInputs in, ExtractOptions opt = {});

  /// rows = locations, cols = columns (in order).
  Eigen::MatrixXd extract(std::span<const std::string> columns, std::span<const Index3> locations);

  /// Dense mother map by name (mind, stdT, stdTL, biasT, biasTL, cvh, jac).
  const Image& mother(const std::string& name);

 private:
  void fill_local(const ColumnSpec& spec, std::span<const Index3> locations, Eigen::Ref<Eigen::VectorXd> out);

  PairInputs in_;
  ExtractOptions opt_;
  std::map<std::string, Image> mothers_;
  std::map<std::string, std::vector<double>> local_cache_;
};

}  // namespace regmap

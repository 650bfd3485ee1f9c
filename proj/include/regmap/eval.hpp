#pragma once

#include "regmap/forest.hpp"
#include "regmap/sampling.hpp"
#include "regmap/table.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace regmap {

/// Mean and sample standard deviation of absolute errors over n samples.
struct AbsErrorStat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct MaeReport {
  AbsErrorStat overall;
  std::array<std::optional<AbsErrorStat>, 3> per_class;  // by true class; absent when empty
};

MaeReport mae(std::span<const double> y, std::span<const double> y_hat);

struct ClassMetrics {
  double accuracy = 0.0;
  std::array<std::optional<double>, 3> f1;  // absent when a class is neither true nor predicted
  Eigen::Matrix3i confusion = Eigen::Matrix3i::Zero();  // rows true, cols predicted
};

ClassMetrics classify_metrics(std::span<const double> y, std::span<const double> y_hat);

/// Fraction of samples in the most frequent true class.
double majority_rate(std::span<const double> y);

struct CvConfig {
  int folds = 3;
  int repeats = 0;     // > 0 selects repeated random splits instead of k folds
  int test_pairs = 0;  // pairs held out per repeat
  ForestConfig forest;
  std::uint64_t seed = 0;
};

struct FoldResult {
  std::vector<std::string> train_pairs;
  std::vector<std::string> test_pairs;
  std::vector<std::size_t> test_rows;  // rows of the input table
  Eigen::VectorXd y;
  Eigen::VectorXd y_hat;
  MaeReport mae;
  ClassMetrics classes;
  double baseline_mae = 0.0;  // constant training-mean predictor
  double majority = 0.0;
};

struct Aggregate {
  double mae = 0.0;
  double mae_std = 0.0;
  std::array<std::optional<double>, 3> mae_class;
  std::array<std::optional<double>, 3> mae_class_std;
  double accuracy = 0.0;
  std::array<std::optional<double>, 3> f1;
  double baseline_mae = 0.0;
  double majority = 0.0;
};

struct CvReport {
  std::vector<FoldResult> folds;
  Aggregate aggregate;  // means over folds; class entries over the folds where present
};

/// Pair-level splits: no pair contributes rows to both sides of a fold.
CvReport cross_validate(const SampleTable& table, const CvConfig& cfg);

Aggregate aggregate_folds(std::span<const FoldResult> folds);

}  // namespace regmap

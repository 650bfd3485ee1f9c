#pragma once

#include "regmap/sampling.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace regmap {

/// Feature rows with their sample bookkeeping. Row r of x belongs to samples[r].
struct SampleTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd x;
  std::vector<Sample> samples;

  [[nodiscard]] std::size_t rows() const { return samples.size(); }
  [[nodiscard]] Eigen::VectorXd targets() const;
  /// Distinct pair ids in first-appearance order.
  [[nodiscard]] std::vector<std::string> pair_ids() const;

  void validate() const;
  /// Appends rows; columns must match exactly.
  void append(const SampleTable& other);
  /// Subset of rows, same columns.
  [[nodiscard]] SampleTable rows_where(const std::vector<std::size_t>& rows) const;
  /// The named columns in the given order; throws SchemaError if any is absent.
  [[nodiscard]] SampleTable select(std::span<const std::string> names) const;
};

/// Header: pair_id,i,j,k,<columns...>,y,class. Doubles in shortest round-trip form.
void write_table_csv(const SampleTable& t, const std::filesystem::path& path);
SampleTable read_table_csv(const std::filesystem::path& path);

/// Little-endian binary rows plus <path>.json describing columns and pair ids.
void write_table_binary(const SampleTable& t, const std::filesystem::path& path);
SampleTable read_table_binary(const std::filesystem::path& path);

/// Dispatch on extension: .csv or binary otherwise.
void write_table(const SampleTable& t, const std::filesystem::path& path);
SampleTable read_table(const std::filesystem::path& path);

}  // namespace regmap

#pragma once

#include "regmap/eval.hpp"
#include "regmap/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace regmap {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Uncompressed (stored-deflate) PNG.
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const RgbImage& img, const std::filesystem::path& path);

/// Axial slice z of `error` (mm) colormapped over [0, max_mm] and blended
/// onto the grayscale fixed image. Width = dims.x, height = dims.y.
RgbImage error_overlay(const Image& fixed, const Image& error, int z, double max_mm = 10.0);

/// metrics.csv, sorted_curve.csv, scatter.csv and, when given, importance.csv.
void emit_reports(const CvReport& report, const SampleTable& table, const std::filesystem::path& dir,
                  std::span<const std::string> importance_columns = {}, std::span<const double> importance = {});

}  // namespace regmap

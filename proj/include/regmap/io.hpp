#pragma once

#include "regmap/volume.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace regmap {

/// Raised on unreadable or malformed input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input file does not exist or cannot be opened.
class MissingFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Opens for reading or throws MissingFileError.
std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in);
/// Shortest representation that round-trips.
std::string format_double(double v);

enum class ElementType { UInt8, Int16, Float32 };

/// Reads the supported MetaImage subset (.mhd + raw, or .mha with LOCAL data).
Image read_mhd(const std::filesystem::path& path);

/// Element type recorded in a MetaImage header.
ElementType read_mhd_element_type(const std::filesystem::path& path);

/// Writes a header plus little-endian payload. A ".mha" path keeps the payload inline.
void write_mhd(const Image& v, const std::filesystem::path& path, ElementType type = ElementType::Float32);

/// Fields are stored as three scalar volumes `<prefix>_dx.mhd`, `_dy`, `_dz`.
Field read_field(const std::filesystem::path& prefix);
void write_field(const Field& f, const std::filesystem::path& prefix);

/// Ensemble layout: `<dir>/<k>/dvf_{dx,dy,dz}.mhd` for k = 0..P-1.
std::vector<Field> read_ensemble(const std::filesystem::path& dir);
void write_ensemble(const std::vector<Field>& members, const std::filesystem::path& dir);

struct LandmarkPair {
  Point3 fixed;
  Point3 moving;
};

struct LandmarkPairSet {
  std::string pair_id;
  std::vector<LandmarkPair> pairs;
};

/// One "xF yF zF xM yM zM" line per pair (mm); '#' starts a comment.
LandmarkPairSet read_landmarks(const std::filesystem::path& path, std::string pair_id = {});
void write_landmarks(const LandmarkPairSet& set, const std::filesystem::path& path);

/// Throws unless every landmark lies inside its volume and the set is nonempty.
void validate_landmarks(const LandmarkPairSet& set, const Geometry& fixed, const Geometry& moving);

}  // namespace regmap

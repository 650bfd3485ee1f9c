#include "regmap/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace regmap {
namespace {

static_assert(std::endian::native == std::endian::little, "payload codec assumes a little-endian host");

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw MissingFileError("cannot open " + path.string());
  return in;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace {

std::vector<double> parse_numbers(const std::string& value, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw FormatError("metaimage: bad number '" + tok + "' for " + key);
    out.push_back(v);
  }
  return out;
}

Point3 parse_triplet(const std::string& value, const std::string& key) {
  const auto v = parse_numbers(value, key);
  if (v.size() != 3) throw FormatError("metaimage: " + key + " needs 3 values");
  return {v[0], v[1], v[2]};
}

bool parse_bool(const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  return v == "true" || v == "1";
}

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::UInt8: return 1;
    case ElementType::Int16: return 2;
    case ElementType::Float32: return 4;
  }
  return 0;
}

const char* element_name(ElementType t) {
  switch (t) {
    case ElementType::UInt8: return "MET_UCHAR";
    case ElementType::Int16: return "MET_SHORT";
    case ElementType::Float32: return "MET_FLOAT";
  }
  return "";
}

ElementType parse_element_type(const std::string& v) {
  if (v == "MET_UCHAR") return ElementType::UInt8;
  if (v == "MET_SHORT") return ElementType::Int16;
  if (v == "MET_FLOAT") return ElementType::Float32;
  throw FormatError("metaimage: unsupported element type " + v);
}

struct Header {
  Geometry geometry;
  ElementType type = ElementType::Float32;
  std::string data_file;
  std::streamoff payload_offset = 0;  // for LOCAL data
};

Header parse_header(const std::filesystem::path& path, std::ifstream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  bool local = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (trim(line).empty()) continue;
      throw FormatError("metaimage: malformed header line in " + path.string());
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!kv.emplace(key, value).second) throw FormatError("metaimage: duplicate key " + key);
    if (key == "ElementDataFile") {
      local = (value == "LOCAL");
      break;  // ElementDataFile terminates the header
    }
  }

  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("metaimage: missing key ") + key);
    return it->second;
  };

  need("ObjectType");
  const auto ndims = parse_numbers(need("NDims"), "NDims");
  if (ndims.size() != 1 || ndims[0] != 3.0) throw FormatError("metaimage: unsupported dimensionality");
  for (const char* k : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
    if (auto it = kv.find(k); it != kv.end() && parse_bool(it->second))
      throw FormatError("metaimage: big-endian payloads are not supported");
  }
  if (auto it = kv.find("CompressedData"); it != kv.end() && parse_bool(it->second))
    throw FormatError("metaimage: compressed payloads are not supported");

  Header h;
  const Point3 dims = parse_triplet(need("DimSize"), "DimSize");
  const Point3 spacing = parse_triplet(need("ElementSpacing"), "ElementSpacing");
  Point3 origin = Point3::Zero();
  if (auto it = kv.find("Offset"); it != kv.end()) origin = parse_triplet(it->second, "Offset");
  if ((dims.array() < 1).any() || (dims.array() != dims.array().round()).any())
    throw FormatError("metaimage: DimSize must be positive integers");
  try {
    h.geometry = Geometry(dims.cast<int>(), spacing, origin);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("metaimage: ") + e.what());
  }
  h.type = parse_element_type(need("ElementType"));
  h.data_file = need("ElementDataFile");
  if (local) h.payload_offset = in.tellg();
  return h;
}

template <typename T>
void decode(const std::vector<char>& bytes, Image::Data& out) {
  for (Eigen::Index n = 0; n < out.size(); ++n) {
    T v;
    std::memcpy(&v, bytes.data() + n * sizeof(T), sizeof(T));
    out[n] = static_cast<double>(v);
  }
}

template <typename T>
std::vector<char> encode(const Image::Data& data) {
  std::vector<char> bytes(data.size() * sizeof(T));
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    const T v = static_cast<T>(data[n]);
    std::memcpy(bytes.data() + n * sizeof(T), &v, sizeof(T));
  }
  return bytes;
}

std::filesystem::path component_path(const std::filesystem::path& prefix, const char* axis) {
  return prefix.parent_path() / (prefix.filename().string() + "_" + axis + ".mhd");
}

}  // namespace

Image read_mhd(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  const Header h = parse_header(path, in);

  const std::int64_t count = h.geometry.voxel_count();
  const std::size_t expected = static_cast<std::size_t>(count) * element_size(h.type);
  std::vector<char> bytes;
  if (h.data_file == "LOCAL") {
    in.seekg(0, std::ios::end);
    const std::streamoff end = in.tellg();
    if (static_cast<std::size_t>(end - h.payload_offset) != expected)
      throw FormatError("metaimage: raw payload size mismatch in " + path.string());
    in.seekg(h.payload_offset);
    bytes.resize(expected);
    in.read(bytes.data(), static_cast<std::streamsize>(expected));
  } else {
    const auto raw = path.parent_path() / h.data_file;
    std::ifstream rin = open_input(raw, std::ios::binary | std::ios::ate);
    if (static_cast<std::size_t>(rin.tellg()) != expected)
      throw FormatError("metaimage: raw payload size mismatch in " + raw.string());
    rin.seekg(0);
    bytes.resize(expected);
    rin.read(bytes.data(), static_cast<std::streamsize>(expected));
  }

  Image::Data data(count);
  switch (h.type) {
    case ElementType::UInt8: decode<std::uint8_t>(bytes, data); break;
    case ElementType::Int16: decode<std::int16_t>(bytes, data); break;
    case ElementType::Float32: decode<float>(bytes, data); break;
  }
  if (!data.allFinite()) throw FormatError("metaimage: non-finite voxel in " + path.string());
  return Image(h.geometry, std::move(data));
}

ElementType read_mhd_element_type(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  return parse_header(path, in).type;
}

void write_mhd(const Image& v, const std::filesystem::path& path, ElementType type) {
  std::vector<char> bytes;
  switch (type) {
    case ElementType::UInt8: bytes = encode<std::uint8_t>(v.data()); break;
    case ElementType::Int16: bytes = encode<std::int16_t>(v.data()); break;
    case ElementType::Float32: bytes = encode<float>(v.data()); break;
  }

  const bool local = path.extension() == ".mha";
  const auto raw_name = path.stem().string() + ".raw";
  const Geometry& g = v.geometry();

  std::ostringstream hdr;
  hdr << "ObjectType = Image\n"
      << "NDims = 3\n"
      << "BinaryData = True\n"
      << "BinaryDataByteOrderMSB = False\n"
      << "CompressedData = False\n"
      << "Offset = " << format_double(g.origin.x()) << ' ' << format_double(g.origin.y()) << ' '
      << format_double(g.origin.z()) << '\n'
      << "ElementSpacing = " << format_double(g.spacing.x()) << ' ' << format_double(g.spacing.y()) << ' '
      << format_double(g.spacing.z()) << '\n'
      << "DimSize = " << g.dims.x() << ' ' << g.dims.y() << ' ' << g.dims.z() << '\n'
      << "ElementType = " << element_name(type) << '\n'
      << "ElementDataFile = " << (local ? std::string("LOCAL") : raw_name) << '\n';

  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("metaimage: cannot write " + path.string());
  const std::string h = hdr.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  if (local) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  } else {
    std::ofstream rout(path.parent_path() / raw_name, std::ios::binary | std::ios::trunc);
    if (!rout) throw std::runtime_error("metaimage: cannot write payload for " + path.string());
    rout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!rout) throw std::runtime_error("metaimage: write failed for " + path.string());
  }
  if (!out) throw std::runtime_error("metaimage: write failed for " + path.string());
}

Field read_field(const std::filesystem::path& prefix) {
  return Field::from_components(read_mhd(component_path(prefix, "dx")), read_mhd(component_path(prefix, "dy")),
                                read_mhd(component_path(prefix, "dz")));
}

void write_field(const Field& f, const std::filesystem::path& prefix) {
  write_mhd(f.component(0), component_path(prefix, "dx"));
  write_mhd(f.component(1), component_path(prefix, "dy"));
  write_mhd(f.component(2), component_path(prefix, "dz"));
}

std::vector<Field> read_ensemble(const std::filesystem::path& dir) {
  std::vector<Field> members;
  for (int k = 0;; ++k) {
    const auto member = dir / std::to_string(k) / "dvf";
    if (!std::filesystem::exists(component_path(member, "dx"))) break;
    members.push_back(read_field(member));
  }
  if (members.empty()) throw FormatError("ensemble: no members under " + dir.string());
  return members;
}

void write_ensemble(const std::vector<Field>& members, const std::filesystem::path& dir) {
  for (std::size_t k = 0; k < members.size(); ++k) write_field(members[k], dir / std::to_string(k) / "dvf");
}

LandmarkPairSet read_landmarks(const std::filesystem::path& path, std::string pair_id) {
  std::ifstream in = open_input(path);
  LandmarkPairSet set;
  set.pair_id = pair_id.empty() ? path.stem().string() : std::move(pair_id);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    std::vector<double> v;
    try {
      v = parse_numbers(line, "landmark");
    } catch (const FormatError&) {
      throw FormatError("landmarks: bad number on line " + std::to_string(lineno));
    }
    if (v.size() != 6) throw FormatError("landmarks: expected 6 values on line " + std::to_string(lineno));
    set.pairs.push_back({Point3(v[0], v[1], v[2]), Point3(v[3], v[4], v[5])});
  }
  if (set.pairs.empty()) throw FormatError("landmarks: no pairs in " + path.string());
  return set;
}

void write_landmarks(const LandmarkPairSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("landmarks: cannot write " + path.string());
  out << "# xF yF zF xM yM zM (mm), pair " << set.pair_id << '\n';
  for (const auto& p : set.pairs) {
    out << format_double(p.fixed.x()) << ' ' << format_double(p.fixed.y()) << ' ' << format_double(p.fixed.z()) << ' '
        << format_double(p.moving.x()) << ' ' << format_double(p.moving.y()) << ' ' << format_double(p.moving.z())
        << '\n';
  }
}

void validate_landmarks(const LandmarkPairSet& set, const Geometry& fixed, const Geometry& moving) {
  if (set.pairs.empty()) throw std::invalid_argument("landmarks: empty set");
  for (const auto& p : set.pairs) {
    if (!fixed.contains_world(p.fixed)) throw std::invalid_argument("landmarks: fixed point outside volume");
    if (!moving.contains_world(p.moving)) throw std::invalid_argument("landmarks: moving point outside volume");
  }
}

}  // namespace regmap

#include "regmap/table.hpp"

#include "regmap/features.hpp"
#include "regmap/io.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace regmap {
namespace {

constexpr char kMagic[4] = {'R', 'M', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "binary tables assume a little-endian host");

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("table: bad number '" + s + "' on line " + std::to_string(line));
  return v;
}

int parse_int(const std::string& s, std::size_t line) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("table: bad index '" + s + "' on line " + std::to_string(line));
  return v;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("table: truncated binary payload");
  return v;
}

Sample make_sample(std::string pair_id, const Index3& idx, double y) {
  Sample s;
  s.pair_id = std::move(pair_id);
  s.index = idx;
  s.y = y;
  s.cls = classify(y);
  return s;
}

}  // namespace

Eigen::VectorXd SampleTable::targets() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t r = 0; r < samples.size(); ++r) y[static_cast<Eigen::Index>(r)] = samples[r].y;
  return y;
}

std::vector<std::string> SampleTable::pair_ids() const {
  std::vector<std::string> out;
  for (const auto& s : samples)
    if (std::find(out.begin(), out.end(), s.pair_id) == out.end()) out.push_back(s.pair_id);
  return out;
}

void SampleTable::validate() const {
  if (x.rows() != static_cast<Eigen::Index>(samples.size()) || x.cols() != static_cast<Eigen::Index>(columns.size()))
    throw std::invalid_argument("table: shape does not match columns and samples");
  if (!x.allFinite()) throw std::invalid_argument("table: non-finite feature value");
  for (const auto& s : samples)
    if (!(s.y >= 0.0) || !std::isfinite(s.y)) throw std::invalid_argument("table: target must be finite and >= 0");
}

void SampleTable::append(const SampleTable& other) {
  if (!columns.empty() && other.columns != columns) throw SchemaError("table: appending rows with different columns");
  if (samples.empty()) {
    *this = other;
    return;
  }
  Eigen::MatrixXd merged(x.rows() + other.x.rows(), x.cols());
  merged << x, other.x;
  x = std::move(merged);
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

SampleTable SampleTable::rows_where(const std::vector<std::size_t>& rows) const {
  SampleTable out;
  out.columns = columns;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.samples.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
    out.samples.push_back(samples[rows[r]]);
  }
  return out;
}

SampleTable SampleTable::select(std::span<const std::string> names) const {
  std::map<std::string, Eigen::Index> where;
  for (std::size_t c = 0; c < columns.size(); ++c) where.emplace(columns[c], static_cast<Eigen::Index>(c));
  SampleTable out;
  out.samples = samples;
  out.x.resize(x.rows(), static_cast<Eigen::Index>(names.size()));
  std::string missing;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto it = where.find(names[c]);
    if (it == where.end()) {
      missing += (missing.empty() ? "" : ", ") + names[c];
      continue;
    }
    out.columns.push_back(names[c]);
    out.x.col(static_cast<Eigen::Index>(c)) = x.col(it->second);
  }
  if (!missing.empty()) throw SchemaError("table lacks schema columns: " + missing);
  return out;
}

void write_table_csv(const SampleTable& t, const std::filesystem::path& path) {
  t.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("table: cannot write " + path.string());
  out << "pair_id,i,j,k";
  for (const auto& c : t.columns) out << ',' << c;
  out << ",y,class\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const Sample& s = t.samples[r];
    out << s.pair_id << ',' << s.index.x() << ',' << s.index.y() << ',' << s.index.z();
    for (Eigen::Index c = 0; c < t.x.cols(); ++c) out << ',' << format_double(t.x(static_cast<Eigen::Index>(r), c));
    out << ',' << format_double(s.y) << ',' << class_name(s.cls) << '\n';
  }
  if (!out) throw std::runtime_error("table: write failed for " + path.string());
}

SampleTable read_table_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("table: empty file " + path.string());
  const auto header = split_csv(line);
  if (header.size() < 6 || header[0] != "pair_id" || header[1] != "i" || header[2] != "j" || header[3] != "k" ||
      header[header.size() - 2] != "y" || header.back() != "class")
    throw FormatError("table: unexpected header in " + path.string());
  SampleTable t;
  t.columns.assign(header.begin() + 4, header.end() - 2);
  const std::size_t nc = t.columns.size();
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw FormatError("table: wrong field count on line " + std::to_string(lineno));
    const Index3 idx(parse_int(f[1], lineno), parse_int(f[2], lineno), parse_int(f[3], lineno));
    for (std::size_t c = 0; c < nc; ++c) values.push_back(parse_double(f[4 + c], lineno));
    Sample s = make_sample(f[0], idx, parse_double(f[4 + nc], lineno));
    if (f.back() != class_name(s.cls)) throw FormatError("table: class disagrees with y on line " + std::to_string(lineno));
    t.samples.push_back(std::move(s));
  }
  t.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(t.samples.size()), static_cast<Eigen::Index>(nc));
  t.validate();
  return t;
}

void write_table_binary(const SampleTable& t, const std::filesystem::path& path) {
  t.validate();
  const auto ids = t.pair_ids();
  std::map<std::string, std::uint32_t> id_index;
  for (std::size_t i = 0; i < ids.size(); ++i) id_index.emplace(ids[i], static_cast<std::uint32_t>(i));

  nlohmann::json meta;
  meta["format"] = "regmap-table";
  meta["version"] = kVersion;
  meta["rows"] = t.rows();
  meta["columns"] = t.columns;
  meta["pair_ids"] = ids;
  std::ofstream side(path.string() + ".json");
  side << meta.dump(2) << '\n';
  if (!side) throw std::runtime_error("table: cannot write sidecar for " + path.string());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("table: cannot write " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(t.rows()));
  put(out, static_cast<std::uint64_t>(t.columns.size()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const Sample& s = t.samples[r];
    put(out, id_index.at(s.pair_id));
    for (int a = 0; a < 3; ++a) put(out, static_cast<std::int32_t>(s.index[a]));
    put(out, s.y);
    for (Eigen::Index c = 0; c < t.x.cols(); ++c) put(out, t.x(static_cast<Eigen::Index>(r), c));
  }
  if (!out) throw std::runtime_error("table: write failed for " + path.string());
}

SampleTable read_table_binary(const std::filesystem::path& path) {
  std::ifstream side = open_input(path.string() + ".json");
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("table: bad sidecar: ") + e.what());
  }
  if (meta.value("format", "") != "regmap-table") throw FormatError("table: sidecar is not a regmap table");
  if (meta.value("version", 0u) != kVersion) throw FormatError("table: unsupported table version");
  SampleTable t;
  const auto ids = meta.at("pair_ids").get<std::vector<std::string>>();
  t.columns = meta.at("columns").get<std::vector<std::string>>();

  std::ifstream in = open_input(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("table: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw FormatError("table: unsupported table version");
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  if (cols != t.columns.size() || rows != meta.at("rows").get<std::uint64_t>())
    throw FormatError("table: sidecar disagrees with payload");
  t.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  t.samples.reserve(rows);
  for (std::uint64_t r = 0; r < rows; ++r) {
    const auto id = get<std::uint32_t>(in);
    if (id >= ids.size()) throw FormatError("table: pair index out of range");
    Index3 idx;
    for (int a = 0; a < 3; ++a) idx[a] = get<std::int32_t>(in);
    const auto y = get<double>(in);
    t.samples.push_back(make_sample(ids[id], idx, y));
    for (std::uint64_t c = 0; c < cols; ++c)
      t.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get<double>(in);
  }
  t.validate();
  return t;
}

void write_table(const SampleTable& t, const std::filesystem::path& path) {
  if (path.extension() == ".csv")
    write_table_csv(t, path);
  else
    write_table_binary(t, path);
}

SampleTable read_table(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_table_csv(path) : read_table_binary(path);
}

}  // namespace regmap

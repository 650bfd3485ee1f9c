#include "regmap/report.hpp"

#include "regmap/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

namespace regmap {
namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t v : data) {
    a = (a + v) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& body) {
  put_be32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, crc32(out.data() + start, out.size() - start));
}

// Piecewise-linear blue -> cyan -> yellow -> red.
std::array<double, 3> heat(double t) {
  static constexpr double stops[4][3] = {{0, 0, 1}, {0, 1, 1}, {1, 1, 0}, {1, 0, 0}};
  t = std::clamp(t, 0.0, 1.0) * 3.0;
  const int k = std::min(static_cast<int>(t), 2);
  const double f = t - k;
  return {stops[k][0] + f * (stops[k + 1][0] - stops[k][0]), stops[k][1] + f * (stops[k + 1][1] - stops[k][1]),
          stops[k][2] + f * (stops[k + 1][2] - stops[k][2])};
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  if (img.width < 1 || img.height < 1 || img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw std::invalid_argument("png: bad image shape");
  std::vector<std::uint8_t> raw;
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  raw.reserve((stride + 1) * img.height);
  for (int r = 0; r < img.height; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(r * stride),
               img.pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
  }

  std::vector<std::uint8_t> z = {0x78, 0x01};
  for (std::size_t pos = 0; pos < raw.size() || pos == 0;) {
    const std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
    const bool last = pos + len == raw.size();
    z.push_back(last ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(len & 0xff));
    z.push_back(static_cast<std::uint8_t>(len >> 8));
    z.push_back(static_cast<std::uint8_t>(~len & 0xff));
    z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos), raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    if (last) break;
  }
  put_be32(z, adler32(raw));

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", {});
  return png;
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("png: cannot write " + path.string());
}

RgbImage error_overlay(const Image& fixed, const Image& error, int z, double max_mm) {
  require_same_geometry(fixed.geometry(), error.geometry(), "error_overlay");
  if (z < 0 || z >= fixed.dims().z()) throw std::out_of_range("error_overlay: slice out of range");
  if (!(max_mm > 0.0)) throw std::invalid_argument("error_overlay: max_mm must be positive");
  RgbImage img;
  img.width = fixed.dims().x();
  img.height = fixed.dims().y();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int j = 0; j < img.height; ++j)
    for (int i = 0; i < img.width; ++i) {
      lo = std::min(lo, fixed(i, j, z));
      hi = std::max(hi, fixed(i, j, z));
    }
  const double range = hi > lo ? hi - lo : 1.0;
  for (int j = 0; j < img.height; ++j)
    for (int i = 0; i < img.width; ++i) {
      const double gray = (fixed(i, j, z) - lo) / range;
      const double t = error(i, j, z) / max_mm;
      const auto c = heat(t);
      const double alpha = 0.25 + 0.5 * std::clamp(t, 0.0, 1.0);
      // Row 0 of the image is the highest y so the slice is not mirrored.
      const std::size_t px = (static_cast<std::size_t>(img.height - 1 - j) * img.width + i) * 3;
      for (int k = 0; k < 3; ++k)
        img.pixels[px + k] = static_cast<std::uint8_t>(std::lround(255.0 * ((1.0 - alpha) * gray + alpha * c[k])));
    }
  return img;
}

void emit_reports(const CvReport& report, const SampleTable& table, const std::filesystem::path& dir,
                  std::span<const std::string> importance_columns, std::span<const double> importance) {
  if (report.folds.empty()) throw std::invalid_argument("emit_reports: empty report");
  std::filesystem::create_directories(dir);

  auto metrics = open_output(dir / "metrics.csv");
  metrics << "fold,train_pairs,test_pairs,n_test,mae,mae_std,mae_correct,mae_correct_std,mae_poor,mae_poor_std,"
             "mae_wrong,mae_wrong_std,accuracy,f1_correct,f1_poor,f1_wrong,baseline_mae,majority_rate\n";
  for (std::size_t k = 0; k < report.folds.size(); ++k) {
    const FoldResult& f = report.folds[k];
    metrics << k << ',' << f.train_pairs.size() << ',' << f.test_pairs.size() << ',' << f.y.size() << ','
            << format_double(f.mae.overall.mean) << ',' << format_double(f.mae.overall.std);
    for (const auto& c : f.mae.per_class)
      metrics << ',' << (c ? format_double(c->mean) : "") << ',' << (c ? format_double(c->std) : "");
    metrics << ',' << format_double(f.classes.accuracy);
    for (const auto& v : f.classes.f1) metrics << ',' << opt(v);
    metrics << ',' << format_double(f.baseline_mae) << ',' << format_double(f.majority) << '\n';
  }
  const Aggregate& a = report.aggregate;
  std::size_t n_test = 0;
  for (const auto& f : report.folds) n_test += static_cast<std::size_t>(f.y.size());
  metrics << "mean,,," << n_test << ',' << format_double(a.mae) << ',' << format_double(a.mae_std);
  for (int c = 0; c < 3; ++c) metrics << ',' << opt(a.mae_class[c]) << ',' << opt(a.mae_class_std[c]);
  metrics << ',' << format_double(a.accuracy);
  for (const auto& v : a.f1) metrics << ',' << opt(v);
  metrics << ',' << format_double(a.baseline_mae) << ',' << format_double(a.majority) << '\n';

  struct Row {
    std::size_t fold;
    std::size_t table_row;
    double y;
    double y_hat;
  };
  std::vector<Row> rows;
  for (std::size_t k = 0; k < report.folds.size(); ++k) {
    const FoldResult& f = report.folds[k];
    for (Eigen::Index r = 0; r < f.y.size(); ++r)
      rows.push_back({k, f.test_rows[static_cast<std::size_t>(r)], f.y[r], f.y_hat[r]});
  }

  auto scatter = open_output(dir / "scatter.csv");
  scatter << "pair_id,i,j,k,fold,y,y_hat\n";
  for (const Row& r : rows) {
    const Sample& s = table.samples.at(r.table_row);
    scatter << s.pair_id << ',' << s.index.x() << ',' << s.index.y() << ',' << s.index.z() << ',' << r.fold << ','
            << format_double(r.y) << ',' << format_double(r.y_hat) << '\n';
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.y < b.y; });
  auto curve = open_output(dir / "sorted_curve.csv");
  curve << "rank,y,y_hat\n";
  for (std::size_t r = 0; r < rows.size(); ++r)
    curve << r << ',' << format_double(rows[r].y) << ',' << format_double(rows[r].y_hat) << '\n';

  if (!importance.empty()) {
    if (importance.size() != importance_columns.size())
      throw std::invalid_argument("emit_reports: importance does not match its columns");
    std::vector<std::size_t> order(importance.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    auto imp = open_output(dir / "importance.csv");
    imp << "rank,feature,importance\n";
    for (std::size_t r = 0; r < order.size(); ++r)
      imp << r << ',' << importance_columns[order[r]] << ',' << format_double(importance[order[r]]) << '\n';
  }
}

}  // namespace regmap

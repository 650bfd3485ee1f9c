#include "regmap/feat_int.hpp"

#include "regmap/filters.hpp"
#include "regmap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace regmap {
namespace {

/// In-place edge-clamped 3-tap mean along each axis; inner loops run over contiguous x.
void box3_mean(Image& img) {
  const Index3& n = img.dims();
  Eigen::ArrayXd& a = img.data();
  const std::int64_t sy = n.x(), sz = std::int64_t{n.x()} * n.y();
  Eigen::ArrayXd tmp(a.size());
  for (std::int64_t row = 0; row < std::int64_t{n.y()} * n.z(); ++row) {
    const double* in = a.data() + row * sy;
    double* out = tmp.data() + row * sy;
    for (int i = 0; i < n.x(); ++i) out[i] = in[std::max(i - 1, 0)] + in[i] + in[std::min(i + 1, n.x() - 1)];
  }
  for (int k = 0; k < n.z(); ++k)
    for (int j = 0; j < n.y(); ++j) {
      const double* lo = tmp.data() + k * sz + std::max(j - 1, 0) * sy;
      const double* mid = tmp.data() + k * sz + j * sy;
      const double* hi = tmp.data() + k * sz + std::min(j + 1, n.y() - 1) * sy;
      double* out = a.data() + k * sz + j * sy;
      for (int i = 0; i < n.x(); ++i) out[i] = lo[i] + mid[i] + hi[i];
    }
  for (int k = 0; k < n.z(); ++k) {
    const double* lo = a.data() + std::max(k - 1, 0) * sz;
    const double* mid = a.data() + k * sz;
    const double* hi = a.data() + std::min(k + 1, n.z() - 1) * sz;
    double* out = tmp.data() + k * sz;
    for (std::int64_t v = 0; v < sz; ++v) out[v] = (lo[v] + mid[v] + hi[v]) * (1.0 / 27.0);
  }
  a.swap(tmp);
}

/// (I(x) - I(x + r))^2 averaged over the 3x3x3 patch, edge-clamped.
Image patch_distance(const Image& img, const Index3& r) {
  const Index3& n = img.dims();
  Image d(img.geometry());
  for (int k = 0; k < n.z(); ++k) {
    const int k2 = std::clamp(k + r.z(), 0, n.z() - 1);
    for (int j = 0; j < n.y(); ++j) {
      const int j2 = std::clamp(j + r.y(), 0, n.y() - 1);
      for (int i = 0; i < n.x(); ++i) {
        const double diff = img(i, j, k) - img(std::clamp(i + r.x(), 0, n.x() - 1), j2, k2);
        d(i, j, k) = diff * diff;
      }
    }
  }
  box3_mean(d);
  return d;
}

/// Patch distances for every offset (rows) and voxel (columns), plus per-voxel
/// minimum and mean over the offsets.
struct MindStats {
  Eigen::MatrixXf distance;
  Eigen::ArrayXf minimum;
  Eigen::ArrayXf variance;
};

MindStats mind_stats(const Image& img, const MindPattern& pattern) {
  const auto m = static_cast<Eigen::Index>(pattern.offsets.size());
  MindStats s;
  s.distance.resize(m, img.size());
  parallel_for(m, [&](std::int64_t r) {
    s.distance.row(r) = patch_distance(img, pattern.offsets[static_cast<std::size_t>(r)]).data().cast<float>().transpose();
  });
  s.minimum = s.distance.colwise().minCoeff().transpose().array();
  s.variance = s.distance.colwise().mean().transpose().array();
  return s;
}

inline float mind_component(float d, float dmin, float var) {
  return var > 0.0f ? std::exp(-(d - dmin) / var) : 1.0f;
}

void check_box(const Geometry& g, double box_mm, const char* what) {
  if (!(box_mm > 0.0)) throw std::invalid_argument(std::string(what) + ": box must be positive");
  if ((g.spacing.array() > box_mm + 1e-9).any())
    throw std::invalid_argument(std::string(what) + ": box smaller than one voxel");
}

double entropy_from_counts(std::span<const double> counts, double total, double log_base) {
  double acc = 0.0;
  for (double c : counts)
    if (c > 0.0) acc += c * std::log(c);
  double h = std::log(total) - acc / total;
  if (log_base > 0.0) h /= std::log(log_base);
  return std::max(h, 0.0);
}

}  // namespace

MindPattern MindPattern::sparse82(int short_axis) {
  if (short_axis < 0 || short_axis > 2) throw std::invalid_argument("MindPattern: axis out of range");
  const int a1 = (short_axis + 1) % 3;
  const int a2 = (short_axis + 2) % 3;
  MindPattern p;
  p.box = Index3::Constant(7);
  p.box[short_axis] = 3;
  auto add = [&](int u, int v, int w) {
    Index3 o = Index3::Zero();
    o[a1] = u;
    o[a2] = v;
    o[short_axis] = w;
    p.offsets.push_back(o);
  };
  for (int v = -3; v <= 3; ++v)
    for (int u = -3; u <= 3; ++u)
      if (u != 0 || v != 0) add(u, v, 0);
  for (int w : {-1, 1}) {
    for (int v = -1; v <= 1; ++v)
      for (int u = -1; u <= 1; ++u) add(u, v, w);
    for (int v : {-2, 0, 2})
      for (int u : {-2, 0, 2})
        if (u != 0 || v != 0) add(u, v, w);
  }
  return p;
}

MindPattern MindPattern::for_spacing(const Point3& spacing) {
  int axis = 2;
  for (int a = 0; a < 3; ++a)
    if (spacing[a] > spacing[axis] + 1e-9) axis = a;
  return sparse82(axis);
}

Eigen::MatrixXf mind_descriptor(const Image& img, const MindPattern& pattern) {
  MindStats s = mind_stats(img, pattern);
  Eigen::MatrixXf& desc = s.distance;
#pragma omp parallel for schedule(static)
  for (Eigen::Index v = 0; v < desc.cols(); ++v)
    for (Eigen::Index r = 0; r < desc.rows(); ++r)
      desc(r, v) = mind_component(desc(r, v), s.minimum[v], s.variance[v]);
  return std::move(desc);
}

FeatureMap mind_distance(const Image& fixed, const Image& warped, const MindPattern& pattern) {
  require_same_geometry(fixed.geometry(), warped.geometry(), "mind_distance");
  const Eigen::MatrixXf df = mind_descriptor(fixed, pattern);
  const Eigen::MatrixXf dw = mind_descriptor(warped, pattern);
  Image out(fixed.geometry());
#pragma omp parallel for schedule(static)
  for (Eigen::Index v = 0; v < df.cols(); ++v) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < df.rows(); ++r) acc += std::abs(static_cast<double>(df(r, v)) - dw(r, v));
    out[v] = acc;
  }
  return {"mind", std::move(out), ""};
}

int sturges_bins(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("sturges_bins: n must be >= 1");
  return static_cast<int>(std::floor(std::log2(static_cast<double>(n)) + 1.0));
}

MiTerms mi_terms(std::span<const double> joint, int bins_fixed, int bins_moving, double log_base) {
  if (static_cast<std::int64_t>(joint.size()) != std::int64_t{bins_fixed} * bins_moving)
    throw std::invalid_argument("mi_terms: table size mismatch");
  std::vector<double> mf(bins_fixed, 0.0);
  std::vector<double> mm(bins_moving, 0.0);
  double total = 0.0;
  for (int f = 0; f < bins_fixed; ++f)
    for (int m = 0; m < bins_moving; ++m) {
      const double c = joint[f * bins_moving + m];
      mf[f] += c;
      mm[m] += c;
      total += c;
    }
  MiTerms t;
  if (total <= 0.0) return t;
  t.h_fixed = entropy_from_counts(mf, total, log_base);
  t.h_moving = entropy_from_counts(mm, total, log_base);
  t.h_joint = entropy_from_counts(joint, total, log_base);
  if (t.h_joint > 0.0) t.nmi = std::clamp((t.h_fixed + t.h_moving) / t.h_joint, 1.0, 2.0);
  const double hmin = std::min(t.h_fixed, t.h_moving);
  if (hmin > 0.0) t.pmi = std::clamp((t.h_fixed + t.h_moving - t.h_joint) / hmin, 0.0, 1.0);
  return t;
}

std::vector<std::pair<double, double>> local_mi_at(const Image& fixed, const Image& warped, double box_mm,
                                                   MiBinning binning, std::span<const Index3> locations,
                                                   int constant_bins) {
  require_same_geometry(fixed.geometry(), warped.geometry(), "local_mi");
  check_box(fixed.geometry(), box_mm, "local_mi");
  if (binning == MiBinning::Constant && constant_bins < 2) throw std::invalid_argument("local_mi: bins must be >= 2");
  const Geometry& g = fixed.geometry();
  const Index3 box = box_voxels(g.spacing, box_mm);
  std::vector<std::pair<double, double>> out(locations.size());

#pragma omp parallel
  {
    std::vector<double> joint;
    std::vector<std::int64_t> voxels;
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t q = 0; q < static_cast<std::int64_t>(locations.size()); ++q) {
      const VoxelBox vb = clipped_box(g, locations[q], box);
      voxels.clear();
      double flo = std::numeric_limits<double>::infinity(), fhi = -flo;
      double wlo = flo, whi = -flo;
      for (int k = vb.lo.z(); k <= vb.hi.z(); ++k)
        for (int j = vb.lo.y(); j <= vb.hi.y(); ++j)
          for (int i = vb.lo.x(); i <= vb.hi.x(); ++i) {
            const std::int64_t v = g.linear(i, j, k);
            voxels.push_back(v);
            flo = std::min(flo, fixed[v]);
            fhi = std::max(fhi, fixed[v]);
            wlo = std::min(wlo, warped[v]);
            whi = std::max(whi, warped[v]);
          }
      const int bins =
          binning == MiBinning::Constant ? constant_bins : sturges_bins(static_cast<std::int64_t>(voxels.size()));
      const Binning bf{flo, fhi, bins};
      const Binning bw{wlo, whi, bins};
      joint.assign(static_cast<std::size_t>(bins) * bins, 0.0);
      for (const std::int64_t v : voxels) joint[bf.index(fixed[v]) * bins + bw.index(warped[v])] += 1.0;
      const MiTerms t = mi_terms(joint, bins, bins);
      out[q] = {t.nmi, t.pmi};
    }
  }
  return out;
}

std::pair<FeatureMap, FeatureMap> local_mi(const Image& fixed, const Image& warped, double box_mm, MiBinning binning,
                                           int constant_bins) {
  const auto locations = all_voxels(fixed.geometry());
  const auto values = local_mi_at(fixed, warped, box_mm, binning, locations, constant_bins);
  Image nmi(fixed.geometry());
  Image pmi(fixed.geometry());
  for (std::size_t v = 0; v < values.size(); ++v) {
    nmi[static_cast<std::int64_t>(v)] = values[v].first;
    pmi[static_cast<std::int64_t>(v)] = values[v].second;
  }
  return {{"nmi", std::move(nmi), ""}, {"pmi", std::move(pmi), ""}};
}

std::pair<FeatureMap, FeatureMap> sid_gid(const Image& fixed, const Image& warped, double sigma_mm) {
  require_same_geometry(fixed.geometry(), warped.geometry(), "sid_gid");
  if (!(sigma_mm > 0.0)) throw std::invalid_argument("sid_gid: sigma must be positive");
  Image diff(fixed.geometry());
  diff.data() = fixed.data() - warped.data();
  Image sq(fixed.geometry());
  sq.data() = diff.data().square();
  Image sid = gaussian_smooth(sq, sigma_mm);

  Image gid(fixed.geometry());
  for (int a = 0; a < 3; ++a) gid.data() += gaussian_derivative(diff, sigma_mm, a).data().square();
  gid.data() = gid.data().sqrt();
  return {{"sid", std::move(sid), "intensity^2"}, {"gid", std::move(gid), "intensity/mm"}};
}

std::vector<double> nc_at(const Image& fixed, const Image& warped, double box_mm, std::span<const Index3> locations) {
  require_same_geometry(fixed.geometry(), warped.geometry(), "nc");
  check_box(fixed.geometry(), box_mm, "nc");
  const Geometry& g = fixed.geometry();
  const Index3 box = box_voxels(g.spacing, box_mm);
  std::vector<double> out(locations.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t q = 0; q < static_cast<std::int64_t>(locations.size()); ++q) {
    const VoxelBox vb = clipped_box(g, locations[q], box);
    double sf = 0.0, sw = 0.0;
    for (int k = vb.lo.z(); k <= vb.hi.z(); ++k)
      for (int j = vb.lo.y(); j <= vb.hi.y(); ++j)
        for (int i = vb.lo.x(); i <= vb.hi.x(); ++i) {
          const std::int64_t v = g.linear(i, j, k);
          sf += fixed[v];
          sw += warped[v];
        }
    const double n = static_cast<double>(vb.count());
    const double mf = sf / n;
    const double mw = sw / n;
    double vf = 0.0, vw = 0.0, cov = 0.0;
    for (int k = vb.lo.z(); k <= vb.hi.z(); ++k)
      for (int j = vb.lo.y(); j <= vb.hi.y(); ++j)
        for (int i = vb.lo.x(); i <= vb.hi.x(); ++i) {
          const std::int64_t v = g.linear(i, j, k);
          const double a = fixed[v] - mf;
          const double b = warped[v] - mw;
          vf += a * a;
          vw += b * b;
          cov += a * b;
        }
    vf /= n;
    vw /= n;
    cov /= n;
    out[q] = (vf < 1e-12 || vw < 1e-12) ? 0.0 : std::clamp(cov / std::sqrt(vf * vw), -1.0, 1.0);
  }
  return out;
}

FeatureMap nc(const Image& fixed, const Image& warped, double box_mm) {
  const auto locations = all_voxels(fixed.geometry());
  const auto values = nc_at(fixed, warped, box_mm, locations);
  Image out(fixed.geometry());
  out.data() = Eigen::Map<const Eigen::ArrayXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return {"nc", std::move(out), ""};
}

std::vector<Index3> all_voxels(const Geometry& g) {
  std::vector<Index3> out(static_cast<std::size_t>(g.voxel_count()));
  for (std::int64_t v = 0; v < g.voxel_count(); ++v) out[static_cast<std::size_t>(v)] = g.unravel(v);
  return out;
}

}  // namespace regmap

#include "regmap/feat_reg.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace regmap {
namespace {

void check_ensemble(std::span<const Field> ensemble, const char* what) {
  if (ensemble.size() < 2) throw std::invalid_argument(std::string(what) + ": ensemble needs at least 2 members");
  for (const auto& f : ensemble) require_same_geometry(ensemble[0].geometry(), f.geometry(), what);
}

Eigen::Matrix3Xd ensemble_mean(std::span<const Field> ensemble) {
  Eigen::Matrix3Xd mean = Eigen::Matrix3Xd::Zero(3, ensemble[0].size());
  for (const auto& f : ensemble) mean += f.vectors();
  return mean / static_cast<double>(ensemble.size());
}

}  // namespace

FeatureMap std_dvf(std::span<const Field> ensemble, std::string name) {
  check_ensemble(ensemble, "std_dvf");
  const Eigen::Matrix3Xd mean = ensemble_mean(ensemble);
  Eigen::ArrayXd ss = Eigen::ArrayXd::Zero(mean.cols());
  for (const auto& f : ensemble) ss += (f.vectors() - mean).colwise().squaredNorm().transpose().array();
  Image out(ensemble[0].geometry());
  out.data() = (ss / static_cast<double>(ensemble.size() - 1)).sqrt();
  return {std::move(name), std::move(out), "mm"};
}

FeatureMap bias_map(const Field& t_b, std::span<const Field> ensemble, std::string name) {
  if (ensemble.empty()) throw std::invalid_argument("bias_map: empty ensemble");
  for (const auto& f : ensemble) require_same_geometry(t_b.geometry(), f.geometry(), "bias_map");
  const Eigen::Matrix3Xd mean = ensemble_mean(ensemble);
  Image out(t_b.geometry());
  out.data() = (t_b.vectors() - mean).colwise().norm().transpose().array();
  return {std::move(name), std::move(out), "mm"};
}

Eigen::MatrixXd cvh_table(const Image& fixed, std::span<const Image> warped_ensemble, const Binning& binning,
                          double epsilon) {
  if (warped_ensemble.size() < 2) throw std::invalid_argument("cvh: ensemble needs at least 2 members");
  if (binning.bins < 2) throw std::invalid_argument("cvh: bins must be >= 2");
  const int b = binning.bins;
  const auto p = static_cast<double>(warped_ensemble.size());

  std::vector<int> fixed_bin(fixed.size());
  for (std::int64_t v = 0; v < fixed.size(); ++v) fixed_bin[v] = binning.index(fixed[v]);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(b, b);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(b, b);
  Eigen::MatrixXd h(b, b);
  for (const auto& w : warped_ensemble) {
    require_same_geometry(fixed.geometry(), w.geometry(), "cvh");
    h.setZero();
    for (std::int64_t v = 0; v < fixed.size(); ++v) h(fixed_bin[v], binning.index(w[v])) += 1.0;
    sum += h;
    sum_sq += h.cwiseProduct(h);
  }
  const Eigen::ArrayXXd mean = sum.array() / p;
  // Sample variance from integer counts; clamp round-off below zero.
  const Eigen::ArrayXXd var = ((sum_sq.array() - p * mean.square()) / (p - 1.0)).max(0.0);
  return (var.sqrt() / (mean + epsilon)).matrix();
}

FeatureMap cvh(const Image& fixed, std::span<const Image> warped_ensemble, const Image& base_warped,
               const CvhOptions& opt) {
  if (warped_ensemble.size() < 2) throw std::invalid_argument("cvh: ensemble needs at least 2 members");
  if (opt.bins < 2) throw std::invalid_argument("cvh: bins must be >= 2");
  require_same_geometry(fixed.geometry(), base_warped.geometry(), "cvh");

  Binning binning;
  binning.bins = opt.bins;
  binning.lo = std::min(fixed.data().minCoeff(), base_warped.data().minCoeff());
  binning.hi = std::max(fixed.data().maxCoeff(), base_warped.data().maxCoeff());
  const Eigen::MatrixXd table = cvh_table(fixed, warped_ensemble, binning, opt.epsilon);

  Image out(fixed.geometry());
  for (std::int64_t v = 0; v < fixed.size(); ++v) out[v] = table(binning.index(fixed[v]), binning.index(base_warped[v]));
  return {"cvh", std::move(out), ""};
}

FeatureMap jacobian_det(const Field& dvf, std::string name) {
  const Geometry& g = dvf.geometry();
  Image out(g);
  const std::int64_t n = g.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    const Index3 idx = g.unravel(v);
    Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
    for (int a = 0; a < 3; ++a) {
      const int len = g.dims[a];
      if (len < 2) continue;
      Index3 lo = idx;
      Index3 hi = idx;
      if (idx[a] > 0) lo[a] -= 1;
      if (idx[a] < len - 1) hi[a] += 1;
      const double h = (hi[a] - lo[a]) * g.spacing[a];
      j.col(a) += (dvf[g.linear(hi)] - dvf[g.linear(lo)]) / h;
    }
    out[v] = j.determinant();
  }
  return {std::move(name), std::move(out), ""};
}

}  // namespace regmap

#include "regmap/pipeline.hpp"

#include "regmap/pooling.hpp"
#include "regmap/random.hpp"
#include "regmap/report.hpp"

#include <cmath>
#include <fstream>

namespace regmap {

void E2eConfig::validate() const {
  if (pairs < 2) throw std::invalid_argument("e2e: need at least 2 pairs");
  if (budgets.empty()) throw std::invalid_argument("e2e: no iteration budgets");
  for (int b : budgets)
    if (b < 0) throw std::invalid_argument("e2e: budgets must be >= 0");
  if (stride < 1) throw std::invalid_argument("e2e: stride must be >= 1");
  if (folds < 2 || folds > pairs) throw std::invalid_argument("e2e: folds must be in [2, pairs]");
  if (ensemble.members < 2) throw std::invalid_argument("e2e: ensembles need at least 2 members");
  if (ensemble.range_mm < 0.0) throw std::invalid_argument("e2e: perturbation range must be >= 0");
  reg.validate();
  forest.validate();
  schema_columns(schema);
}

RegistrationResult register_pair(const RegistrationContext& ctx, const RegConfig& cfg, const EnsembleConfig& ens,
                                 bool with_ensembles) {
  RegistrationResult r;
  r.grid = register_images(ctx, cfg, registration_grid(ctx, cfg));
  r.t_b = grid_to_dvf(r.grid, ctx.fixed_geometry());
  if (with_ensembles) {
    r.ensemble_t = ensemble_initial(ctx, cfg, ens.members, ens.range_mm, derive_seed(cfg.seed, {1}));
    r.ensemble_tl = ensemble_base(ctx, cfg, r.grid, ens.members, ens.range_mm, derive_seed(cfg.seed, {2}));
  }
  return r;
}

SampleTable feature_table(const Image& fixed, const Image& moving, const Field& t_b, std::span<const Field> ensemble_t,
                          std::span<const Field> ensemble_tl, const std::vector<std::string>& columns,
                          std::vector<Sample> samples, const ExtractOptions& opt) {
  const Image warped = warp(moving, t_b, fixed.geometry());
  std::vector<Image> warped_t;
  const bool ens = needs_ensembles(columns);
  if (ens)
    for (const auto& f : ensemble_t) warped_t.push_back(warp(moving, f, fixed.geometry()));
  PairInputs in;
  in.fixed = &fixed;
  in.warped = &warped;
  in.t_b = &t_b;
  if (ens) {
    in.ensemble_t = ensemble_t;
    in.ensemble_tl = ensemble_tl;
    in.warped_t = warped_t;
  }
  std::vector<Index3> locations;
  locations.reserve(samples.size());
  for (const auto& s : samples) locations.push_back(s.index);
  FeatureExtractor fx(in, opt);
  SampleTable t;
  t.columns = columns;
  t.x = fx.extract(columns, locations);
  t.samples = std::move(samples);
  return t;
}

BSplineGrid corrupt_grid(const BSplineGrid& grid, const Point3& center, double radius_mm, double bump_mm) {
  if (!(radius_mm > 0.0)) throw std::invalid_argument("corrupt_grid: radius must be positive");
  BSplineGrid out = grid;
  for (int c = 0; c < grid.dims.z(); ++c)
    for (int b = 0; b < grid.dims.y(); ++b)
      for (int a = 0; a < grid.dims.x(); ++a) {
        const Point3 p = grid.origin + (Point3(a, b, c).array() * grid.spacing.array()).matrix();
        const double q = (p - center).squaredNorm() / (radius_mm * radius_mm);
        if (q >= 1.0) continue;
        out.coefficients(0, grid.linear(a, b, c)) += bump_mm * (1.0 - q) * (1.0 - q);
      }
  return out;
}

namespace {

void log_line(const Logger& log, const std::string& s) {
  if (log) log(s);
}

std::string pair_name(int p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "pair%02d", p);
  return buf;
}

/// Mid-slice voxel with the largest local intensity spread, kept `margin` voxels from the in-plane border.
Index3 textured_center(const Image& img, const Volume<std::uint8_t>& homogeneous, int z, int margin) {
  Image sq(img.geometry());
  sq.data() = img.data().square();
  const IntegralVolume s1(img), s2(sq);
  const Index3 box = box_voxels(img.spacing(), 15.0);
  Index3 best(img.dims().x() / 2, img.dims().y() / 2, z);
  double best_sd = -1.0;
  for (int j = margin; j < img.dims().y() - margin; ++j)
    for (int i = margin; i < img.dims().x() - margin; ++i) {
      if (homogeneous(i, j, z)) continue;
      const VoxelBox b = clipped_box(img.geometry(), Index3(i, j, z), box);
      const double n = static_cast<double>(b.count());
      const double m = s1.box_sum(b) / n;
      const double sd = std::sqrt(std::max(0.0, s2.box_sum(b) / n - m * m));
      if (sd > best_sd) {
        best_sd = sd;
        best = Index3(i, j, z);
      }
    }
  return best;
}

ParityResult run_parity(const E2eConfig& cfg, const std::vector<std::string>& columns, const Forest& forest,
                        const std::filesystem::path& out, const Logger& log) {
  const SyntheticPair pair = make_synthetic_pair("parity", cfg.pair, derive_seed(cfg.seed, {3}));
  const RegistrationContext ctx(pair.fixed, pair.moving, cfg.reg.resolutions);
  RegConfig rc = cfg.reg;
  rc.iterations = *std::max_element(cfg.budgets.begin(), cfg.budgets.end());
  rc.seed = derive_seed(cfg.seed, {4});
  const bool ens = needs_ensembles(columns);
  const RegistrationResult base = register_pair(ctx, rc, cfg.ensemble, ens);

  const Geometry& g = pair.fixed.geometry();
  const int z = g.dims.z() / 2;
  const double radius_mm = 20.0;
  const int margin = static_cast<int>(std::ceil(radius_mm / g.spacing.head<2>().maxCoeff())) + 2;
  const Index3 c = textured_center(pair.fixed, pair.homogeneous, z, margin);
  const BSplineGrid bad = corrupt_grid(base.grid, g.to_world(c), radius_mm, 12.0);
  const Field t_bad = grid_to_dvf(bad, g);
  // The initial-perturbation ensemble does not depend on the base transform;
  // the base ensemble is re-registered around the corrupted transform.
  std::vector<Field> tl;
  if (ens) tl = ensemble_base(ctx, rc, bad, cfg.ensemble.members, cfg.ensemble.range_mm, derive_seed(rc.seed, {2}));

  const Image truth_err = true_error_map(t_bad, pair.truth);
  std::vector<Sample> slice;
  for (int j = 0; j < g.dims.y(); ++j)
    for (int i = 0; i < g.dims.x(); ++i) {
      const Index3 idx(i, j, z);
      slice.push_back({"parity", idx, g.to_world(idx), truth_err(i, j, z), classify(truth_err(i, j, z))});
    }
  const SampleTable t = feature_table(pair.fixed, pair.moving, t_bad, base.ensemble_t, tl, columns, slice, cfg.features);
  const Eigen::VectorXd pred = forest.predict(t.x, t.columns);

  Image shift(g);
  shift.data() = (t_bad.vectors() - base.t_b.vectors()).colwise().norm().transpose().array();
  double peak = 0.0;
  for (const auto& smp : slice) peak = std::max(peak, shift(smp.index.x(), smp.index.y(), smp.index.z()));

  Image pred_map(g);
  ParityResult r;
  r.slice = z;
  for (std::size_t s = 0; s < slice.size(); ++s) {
    const Index3& idx = slice[s].index;
    pred_map(idx.x(), idx.y(), idx.z()) = pred[static_cast<Eigen::Index>(s)];
    const auto v = g.linear(idx);
    if (shift[v] >= 0.5 * peak) {
      r.predicted_misregistered += pred[static_cast<Eigen::Index>(s)];
      r.true_misregistered += truth_err[v];
      ++r.misregistered_voxels;
    } else if (shift[v] == 0.0 && truth_err[v] < 3.0) {
      r.predicted_converged += pred[static_cast<Eigen::Index>(s)];
      r.true_converged += truth_err[v];
      ++r.converged_voxels;
    }
  }
  if (r.misregistered_voxels == 0 || r.converged_voxels == 0) throw std::runtime_error("parity: empty region");
  r.predicted_misregistered /= static_cast<double>(r.misregistered_voxels);
  r.true_misregistered /= static_cast<double>(r.misregistered_voxels);
  r.predicted_converged /= static_cast<double>(r.converged_voxels);
  r.true_converged /= static_cast<double>(r.converged_voxels);

  write_png(error_overlay(pair.fixed, pred_map, z), out / "error_map.png");
  write_png(error_overlay(pair.fixed, truth_err, z), out / "true_error_map.png");
  std::ofstream csv(out / "parity.csv");
  csv << "region,voxels,predicted_mean,true_mean\n"
      << "misregistered," << r.misregistered_voxels << ',' << format_double(r.predicted_misregistered) << ','
      << format_double(r.true_misregistered) << '\n'
      << "converged," << r.converged_voxels << ',' << format_double(r.predicted_converged) << ','
      << format_double(r.true_converged) << '\n';
  log_line(log, "parity: predicted " + format_double(r.predicted_misregistered) + " mm vs " +
                    format_double(r.predicted_converged) + " mm");
  return r;
}

}  // namespace

E2eResult run_e2e(const E2eConfig& cfg, const std::filesystem::path& out, const Logger& log) {
  cfg.validate();
  std::filesystem::create_directories(out);
  const std::vector<std::string> columns = schema_columns(cfg.schema);
  const bool ens = needs_ensembles(columns);

  E2eResult result;
  result.table.columns = columns;
  for (int p = 0; p < cfg.pairs; ++p) {
    const std::string id = pair_name(p);
    const SyntheticPair pair = make_synthetic_pair(id, cfg.pair, derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(p)}));
    const RegistrationContext ctx(pair.fixed, pair.moving, cfg.reg.resolutions);
    for (std::size_t b = 0; b < cfg.budgets.size(); ++b) {
      RegConfig rc = cfg.reg;
      rc.iterations = cfg.budgets[b];
      rc.seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(p), b});
      const RegistrationResult reg = register_pair(ctx, rc, cfg.ensemble, ens);
      const Image err = true_error_map(reg.t_b, pair.truth);
      std::vector<Sample> samples = dense_from_truth(err, cfg.stride, id);
      result.table.append(feature_table(pair.fixed, pair.moving, reg.t_b, reg.ensemble_t, reg.ensemble_tl, columns,
                                        std::move(samples), cfg.features));
      log_line(log, id + " budget " + std::to_string(cfg.budgets[b]) + ": mean error " + format_double(err.data().mean()) +
                        " mm, " + std::to_string(result.table.rows()) + " rows");
    }
  }
  write_table(result.table, out / "table.bin");

  CvConfig cv;
  cv.folds = cfg.folds;
  cv.forest = cfg.forest;
  cv.seed = cfg.seed;
  result.cv = cross_validate(result.table, cv);
  log_line(log, "cv: mae " + format_double(result.cv.aggregate.mae) + " baseline " +
                    format_double(result.cv.aggregate.baseline_mae) + " accuracy " +
                    format_double(result.cv.aggregate.accuracy) + " majority " + format_double(result.cv.aggregate.majority));

  const Eigen::VectorXd y = result.table.targets();
  const Forest final_model = train_forest(result.table.x, y, cfg.forest, columns);
  save_forest(final_model, out / "model.bin");
  result.importance = oob_importance(final_model, result.table.x, y);
  emit_reports(result.cv, result.table, out, columns,
               std::span<const double>(result.importance.data(), static_cast<std::size_t>(result.importance.size())));
  if (cfg.parity) result.parity = run_parity(cfg, columns, final_model, out, log);
  return result;
}

}  // namespace regmap

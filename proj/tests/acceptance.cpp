// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "regmap/eval.hpp"
#include "regmap/feat_int.hpp"
#include "regmap/feat_reg.hpp"
#include "regmap/features.hpp"
#include "regmap/forest.hpp"
#include "regmap/io.hpp"
#include "regmap/pooling.hpp"
#include "regmap/sampling.hpp"
#include "regmap/synth.hpp"
#include "regmap/table.hpp"

#include <CLI11.hpp>
#include <Eigen/LU>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace regmap;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

Image uniform_image(const Geometry& g, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(g);
  for (std::int64_t n = 0; n < img.size(); ++n) img[n] = u(rng);
  return img;
}

Field constant_field(const Geometry& g, const Eigen::Vector3d& v) {
  Field f(g);
  f.vectors().colwise() = v;
  return f;
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "'" + cli + "' " + args + " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Column `name` of the row whose first cell is `key`.
double csv_value(const fs::path& path, const std::string& key, const std::string& name) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty " + path.string());
  const auto header = split(line);
  const auto col = std::find(header.begin(), header.end(), name) - header.begin();
  while (std::getline(in, line)) {
    const auto cells = split(line);
    if (!cells.empty() && cells[0] == key) return std::stod(cells.at(static_cast<std::size_t>(col)));
  }
  throw std::runtime_error("no row " + key + " in " + path.string());
}

Outcome pooling_oracle() {
  const auto t0 = Clock::now();
  const Geometry g(Index3::Constant(32), Point3(1.0, 1.0, 2.5));
  std::size_t mean_bad = 0;
  std::size_t max_bad = 0;
  double pooling_s = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FeatureMap m{"m", uniform_image(g, 1000 + seed, -50.0, 50.0), ""};
    for (double mm : kPoolBoxesMm) {
      const auto tp = Clock::now();
      const FeatureMap avg = avg_pool(m, mm);
      const FeatureMap mx = max_pool(m, mm);
      pooling_s += seconds_since(tp);
      const Index3 box = box_voxels(g.spacing, mm);
      for (std::int64_t n = 0; n < g.voxel_count(); ++n) {
        const VoxelBox b = clipped_box(g, g.unravel(n), box);
        double sum = 0.0;
        double top = -std::numeric_limits<double>::infinity();
        for (int k = b.lo.z(); k <= b.hi.z(); ++k)
          for (int j = b.lo.y(); j <= b.hi.y(); ++j)
            for (int i = b.lo.x(); i <= b.hi.x(); ++i) {
              sum += m.values(i, j, k);
              top = std::max(top, m.values(i, j, k));
            }
        const double mean = sum / static_cast<double>(b.count());
        if (std::abs(avg.values[n] - mean) > 1e-6 * std::max(std::abs(mean), 1e-12)) ++mean_bad;
        if (mx.values[n] != top) ++max_bad;
      }
    }
  }
  const double t = seconds_since(t0);
  return {mean_bad == 0 && max_bad == 0 && t < 60.0,
          "mean mismatches " + std::to_string(mean_bad) + ", max mismatches " + std::to_string(max_bad) + ", pooling " +
              fmt(pooling_s, 3) + " s, with oracle " + fmt(t, 3) + " s"};
}

Outcome formula_spot_checks() {
  const auto t0 = Clock::now();
  const Geometry g(Index3(6, 5, 4), Point3(1.0, 1.5, 2.0));
  std::vector<std::string> failed;
  auto check = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) failed.push_back(std::string(what) + "=" + fmt(got, 12));
  };

  const std::vector<Field> ens = {constant_field(g, {1, 0, 0}), constant_field(g, {3, 0, 0})};
  check("std_dvf", std_dvf(ens).values[7], std::sqrt(2.0), 1e-9);

  const std::vector<Field> ens_b = {constant_field(g, {1, 1, 1}), constant_field(g, {1, -1, -1})};
  check("bias_map", bias_map(constant_field(g, {1, 3, 4}), ens_b).values[11], 5.0, 1e-9);

  // One joint-histogram bin holding 10 voxels in member A and 20 in member B.
  const Geometry line(Index3(30, 1, 1), Point3::Ones());
  Image a(line, 1.0);
  Image b(line, 1.0);
  for (int i = 0; i < 10; ++i) a(i, 0, 0) = 0.0;
  for (int i = 0; i < 20; ++i) b(i, 0, 0) = 0.0;
  const Eigen::MatrixXd tab = cvh_table(Image(line, 0.0), std::vector<Image>{a, b}, Binning{0.0, 1.0, 2}, 5.0);
  check("cvh", tab(0, 0), std::sqrt(50.0) / 20.0, 1e-6);

  const Geometry gj(Index3(8, 7, 6), Point3(1.0, 2.0, 2.5), Point3(3.0, -1.0, 2.0));
  Field lin(gj);
  for (std::int64_t n = 0; n < lin.size(); ++n) lin[n] = 0.1 * gj.to_world(gj.unravel(n));
  check("jacobian_det", jacobian_det(lin).values(3, 3, 3), 1.331, 1e-9);

  const LandmarkPairSet lm{"p", {{Point3(0, 0, 0), Point3(0, 0, 0)}}};
  check("landmark_error", landmark_error(lm, constant_field(Geometry(Index3(4, 4, 4), Point3::Ones()), {1, 2, 2}))[0].second,
        3.0, 1e-9);

  const std::vector<double> y = {1, 4, 7};
  const std::vector<double> p = {2, 2, 8};
  const MaeReport m = mae(y, p);
  check("mae", m.overall.mean, 4.0 / 3.0, 1e-9);
  check("mae_correct", m.per_class[0]->mean, 1.0, 1e-9);
  check("mae_poor", m.per_class[1]->mean, 2.0, 1e-9);
  check("mae_wrong", m.per_class[2]->mean, 1.0, 1e-9);

  const ClassMetrics c = classify_metrics(y, p);
  check("accuracy", c.accuracy, 2.0 / 3.0, 1e-9);
  check("f1_correct", *c.f1[0], 2.0 / 3.0, 1e-9);
  check("f1_poor", *c.f1[1], 0.0, 1e-9);
  check("f1_wrong", *c.f1[2], 1.0, 1e-9);

  const double t = seconds_since(t0);
  std::string detail = failed.empty() ? "all 14 values match" : "mismatch:";
  for (const auto& f : failed) detail += " " + f;
  return {failed.empty() && t < 10.0, detail + ", " + fmt(t, 3) + " s"};
}

Outcome affine_jacobian() {
  const Geometry g(Index3(12, 11, 10), Point3(1.0, 1.5, 2.5), Point3(-4.0, 2.0, 1.0));
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(r, c) = u(rng);
    A *= 0.29 / A.norm();  // Frobenius norm, which bounds the spectral norm
    Field f(g);
    for (std::int64_t n = 0; n < f.size(); ++n) f[n] = A * g.to_world(g.unravel(n));
    const FeatureMap j = jacobian_det(f);
    const double want = (Eigen::Matrix3d::Identity() + A).determinant();
    for (int k = 1; k < g.dims.z() - 1; ++k)
      for (int jj = 1; jj < g.dims.y() - 1; ++jj)
        for (int i = 1; i < g.dims.x() - 1; ++i) worst = std::max(worst, std::abs(j.values(i, jj, k) - want));
  }
  return {worst < 1e-6, "max interior deviation " + fmt(worst, 3)};
}

Outcome range_invariants() {
  const Geometry g(Index3::Constant(20), Point3::Constant(2.0));
  std::size_t bad = 0;
  double nmi_lo = 2.0, nmi_hi = 1.0, pmi_lo = 1.0, pmi_hi = 0.0, nc_lo = 1.0, nc_hi = -1.0;
  double mind_lo = 1e300, cvh_lo = 1e300;
  const auto locs = all_voxels(g);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Image fixed, warped;
    std::vector<Image> members;
    if (s < 5) {
      fixed = generate_phantom(g.dims, g.spacing, 500 + s);
      warped = warp(fixed, generate_random_dvf(g, 6.0, 10.0, 600 + s));
      for (std::uint64_t m = 0; m < 3; ++m) members.push_back(warp(fixed, generate_random_dvf(g, 3.0, 10.0, 700 + 10 * s + m)));
    } else {
      fixed = uniform_image(g, 500 + s, 0.0, 1000.0);
      warped = uniform_image(g, 600 + s, -200.0, 300.0);
      for (std::uint64_t m = 0; m < 3; ++m) members.push_back(uniform_image(g, 700 + 10 * s + m, 0.0, 500.0));
    }
    for (double box : {5.0, 10.0, 20.0}) {
      for (MiBinning bin : {MiBinning::Constant, MiBinning::Sturges}) {
        for (const auto& [nmi, pmi] : local_mi_at(fixed, warped, box, bin, locs)) {
          nmi_lo = std::min(nmi_lo, nmi);
          nmi_hi = std::max(nmi_hi, nmi);
          pmi_lo = std::min(pmi_lo, pmi);
          pmi_hi = std::max(pmi_hi, pmi);
          if (!(nmi >= 1.0 && nmi <= 2.0 && pmi >= 0.0 && pmi <= 1.0)) ++bad;
        }
      }
      for (double v : nc_at(fixed, warped, box, locs)) {
        nc_lo = std::min(nc_lo, v);
        nc_hi = std::max(nc_hi, v);
        if (!(v >= -1.0 && v <= 1.0)) ++bad;
      }
    }
    const FeatureMap md = mind_distance(fixed, warped, MindPattern::for_spacing(g.spacing));
    const FeatureMap cv = cvh(fixed, members, warped);
    mind_lo = std::min(mind_lo, md.values.data().minCoeff());
    cvh_lo = std::min(cvh_lo, cv.values.data().minCoeff());
    bad += static_cast<std::size_t>((md.values.data() < 0.0).count() + (cv.values.data() < 0.0).count());
    bad += static_cast<std::size_t>((!md.values.data().isFinite()).count() + (!cv.values.data().isFinite()).count());
  }
  return {bad == 0, "NMI [" + fmt(nmi_lo) + ", " + fmt(nmi_hi) + "], PMI [" + fmt(pmi_lo) + ", " + fmt(pmi_hi) +
                        "], NC [" + fmt(nc_lo) + ", " + fmt(nc_hi) + "], min MIND " + fmt(mind_lo) + ", min CVH " +
                        fmt(cvh_lo) + ", violations " + std::to_string(bad)};
}

Outcome forest_sanity() {
  const auto t0 = Clock::now();
  constexpr int kInformative = 10;
  constexpr int kCols = 20;
  auto make = [](int rows, std::uint64_t seed, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    x.resize(rows, kCols);
    y.resize(rows);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < kCols; ++c) x(r, c) = u(rng);
      y[r] = x.row(r).head(kInformative).sum();
    }
  };
  int ranked = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Eigen::MatrixXd x, xt;
    Eigen::VectorXd y, yt;
    make(5000, 2 * seed + 1, x, y);
    make(2000, 2 * seed + 2, xt, yt);
    ForestConfig cfg;
    cfg.seed = seed;
    const Forest f = train_forest(x, y, cfg);
    const double var = (yt.array() - yt.mean()).square().mean();
    const double mse = (f.predict(xt) - yt).array().square().mean();
    worst_ratio = std::max(worst_ratio, mse / var);
    const Eigen::VectorXd imp = oob_importance(f, x, y);
    if (imp.head(kInformative).minCoeff() > imp.tail(kCols - kInformative).maxCoeff()) ++ranked;
  }
  const double t = seconds_since(t0);
  return {worst_ratio < 0.5 && ranked >= 18 && t < 120.0,
          "worst held-out MSE/Var " + fmt(worst_ratio) + ", correct ranking in " + std::to_string(ranked) +
              "/20 seeds, " + fmt(t, 3) + " s"};
}

/// Reads the e2e outputs of criterion 6.
Outcome e2e_quality(int exit_code, const fs::path& dir, double minutes) {
  if (exit_code != 0) return {false, "e2e exited with " + std::to_string(exit_code)};
  const fs::path m = dir / "metrics.csv";
  const double mae_v = csv_value(m, "mean", "mae");
  const double base = csv_value(m, "mean", "baseline_mae");
  const double acc = csv_value(m, "mean", "accuracy");
  const double maj = csv_value(m, "mean", "majority_rate");
  const std::size_t cols = read_table(dir / "table.bin").columns.size();
  return {mae_v <= 0.8 * base && acc > maj && cols == 158,
          "MAE " + fmt(mae_v) + " vs 0.8 x baseline " + fmt(0.8 * base) + ", accuracy " + fmt(acc) + " vs majority " +
              fmt(maj) + ", " + std::to_string(cols) + " columns, " + fmt(minutes, 3) + " min"};
}

Outcome reproducibility(int a, int b, const fs::path& da, const fs::path& db) {
  if (a != 0 || b != 0) return {false, "an e2e run failed"};
  const std::string ma = slurp(da / "metrics.csv");
  const std::string mb = slurp(db / "metrics.csv");
  return {!ma.empty() && ma == mb, ma == mb ? "metrics.csv identical (" + std::to_string(ma.size()) + " bytes)"
                                            : "metrics.csv differs"};
}

/// Ingestion path for external registrations: ensembles on disk plus a landmark file.
Outcome external_ingestion(const std::string& cli, const fs::path& work) {
  const fs::path dir = work / "ingest";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Geometry g(Index3(24, 24, 16), Point3(1.0, 1.0, 2.5));
  const Image fixed = generate_phantom(g.dims, g.spacing, 3);
  const Field truth = generate_random_dvf(g, 5.0, 12.0, 4);
  const Image moving = warp(fixed, truth);
  const Field tb = generate_random_dvf(g, 2.0, 12.0, 5);
  std::vector<Field> et, etl;
  for (std::uint64_t s = 0; s < 4; ++s) {
    et.push_back(generate_random_dvf(g, 2.0, 12.0, 10 + s));
    etl.push_back(generate_random_dvf(g, 1.0, 12.0, 20 + s));
  }
  write_mhd(fixed, dir / "fixed.mhd");
  write_mhd(moving, dir / "moving.mhd");
  write_field(tb, dir / "tb");
  write_ensemble(et, dir / "ensT");
  write_ensemble(etl, dir / "ensTL");
  LandmarkPairSet lm{"ext", {}};
  for (const Index3 v : {Index3(6, 6, 4), Index3(12, 12, 8), Index3(18, 10, 11)}) {
    const Point3 xf = g.to_world(v);
    lm.pairs.push_back({xf, xf + truth[g.linear(v)]});
  }
  write_landmarks(lm, dir / "landmarks.txt");
  const int code = run_cli(cli,
                           "--schema combined features --fixed '" + (dir / "fixed.mhd").string() + "' --moving '" +
                               (dir / "moving.mhd").string() + "' --tb '" + (dir / "tb").string() + "' --ens-t '" +
                               (dir / "ensT").string() + "' --ens-tl '" + (dir / "ensTL").string() +
                               "' --landmarks '" + (dir / "landmarks.txt").string() + "' --pair-id ext --out '" +
                               (dir / "table.bin").string() + "'",
                           dir / "log.txt");
  if (code != 0) return {false, "external ingestion exited with " + std::to_string(code)};
  const SampleTable t = read_table(dir / "table.bin");
  const std::size_t want = expand_neighborhood(landmark_error(lm, tb), g, "ext").size();
  const bool ok = t.columns.size() == 158 && t.rows() == want && t.x.allFinite();
  std::cout << "  NOT REPRODUCED: the clinical MAE (1.07 +/- 1.86 mm), accuracy (90.7%) and inter-database results\n"
               "  need the original lung CT scans, landmark annotations and elastix/ANTs registrations, none of which\n"
               "  are available here. The ingestion path that would reproduce them is exercised below.\n";
  return {ok, "external ensembles + landmarks ingested: " + std::to_string(t.rows()) + " rows x " +
                  std::to_string(t.columns.size()) + " columns (expected " + std::to_string(want) + ")"};
}

Outcome parity(int exit_code, const fs::path& dir) {
  if (exit_code != 0) return {false, "e2e run failed"};
  const fs::path p = dir / "parity.csv";
  if (!fs::exists(p) || !fs::exists(dir / "error_map.png")) return {false, "parity outputs missing"};
  const double mis = csv_value(p, "misregistered", "predicted_mean");
  const double conv = csv_value(p, "converged", "predicted_mean");
  const double ratio = mis / conv;
  return {ratio >= 1.5, "predicted " + fmt(mis) + " mm (misregistered) vs " + fmt(conv) + " mm (converged), ratio " +
                            fmt(ratio)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regmap acceptance run"};
  std::string cli = REGMAP_CLI;
  std::string work = (fs::temp_directory_path() / "regmap_acceptance").string();
  bool skip_e2e = false;
  int pairs = 12;
  int dims = 64;
  app.add_option("--cli", cli, "regmap executable")->capture_default_str();
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--pairs", pairs, "Pairs for the end-to-end runs")->capture_default_str();
  app.add_option("--dims", dims, "Volume size for the end-to-end runs")->capture_default_str();
  app.add_flag("--skip-e2e", skip_e2e, "Skip the two end-to-end runs (criteria 6, 7, 9 then fail)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << std::endl;
    if (!o.pass) ++failures;
  };
  auto guarded = [](auto&& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "pooling oracle", guarded(pooling_oracle));
  report(2, "formula spot checks", guarded(formula_spot_checks));
  report(3, "affine jacobian", guarded(affine_jacobian));
  report(4, "range invariants", guarded(range_invariants));
  report(5, "forest sanity", guarded(forest_sanity));

  const fs::path run_a = fs::path(work) / "e2e_a";
  const fs::path run_b = fs::path(work) / "e2e_b";
  int code_a = -1;
  int code_b = -1;
  double minutes = 0.0;
  if (!skip_e2e) {
    const std::string args = "--schema combined --seed 7 e2e --pairs " + std::to_string(pairs) + " --dims " +
                             std::to_string(dims) + " --out ";
    fs::remove_all(run_a);
    fs::remove_all(run_b);
    const auto t0 = Clock::now();
    code_a = run_cli(cli, args + "'" + run_a.string() + "'", fs::path(work) / "e2e_a.log");
    minutes = seconds_since(t0) / 60.0;
    code_b = run_cli(cli, args + "'" + run_b.string() + "'", fs::path(work) / "e2e_b.log");
  }
  report(6, "end-to-end quality", guarded([&] { return e2e_quality(code_a, run_a, minutes); }));
  report(7, "reproducibility", guarded([&] { return reproducibility(code_a, code_b, run_a, run_b); }));
  report(8, "external data path", guarded([&] { return external_ingestion(cli, work); }));
  report(9, "qualitative parity", guarded([&] { return parity(code_a, run_a); }));

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}

#include "helpers.hpp"
#include "regmap/bspline.hpp"
#include "regmap/feat_reg.hpp"
#include "regmap/filters.hpp"
#include "regmap/random.hpp"
#include "regmap/synth.hpp"
#include "regmap/toyreg.hpp"

#include <doctest.h>

using namespace regmap;

namespace {

Image smooth_phantom(const Index3& dims, double spacing, std::uint64_t seed) {
  return gaussian_smooth(generate_phantom(dims, Point3::Constant(spacing), seed), 2.0 * spacing);
}

double mean_norm(const Field& f) { return f.vectors().colwise().norm().mean(); }

}  // namespace

TEST_SUITE("bspline") {

TEST_CASE("basis weights") {
  for (double u : {0.0, 0.25, 0.5, 0.9}) {
    const auto w = cubic_bspline_weights(u);
    CHECK(w[0] + w[1] + w[2] + w[3] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w[0] == doctest::Approx(cubic_bspline(1.0 + u)));
    CHECK(w[1] == doctest::Approx(cubic_bspline(u)));
  }
  CHECK(cubic_bspline(0.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("single unit coefficient reproduces the tensor kernel") {
  const Geometry g(Index3(21, 21, 21), Point3::Ones());
  BSplineGrid grid = BSplineGrid::covering(g, Point3::Constant(5.0));
  const Index3 c(3, 3, 3);
  grid.coefficients.col(grid.linear(c.x(), c.y(), c.z())) = Eigen::Vector3d(1.0, 0.0, -2.0);
  const Field f = grid_to_dvf(grid, g);
  const Point3 cp = grid.origin + c.cast<double>().cwiseProduct(grid.spacing);
  const Index3 at = g.nearest_index(cp);
  const double peak = std::pow(2.0 / 3.0, 3);
  CHECK(f[g.linear(at)].x() == doctest::Approx(peak).epsilon(1e-12));
  CHECK(f[g.linear(at)].z() == doctest::Approx(-2.0 * peak).epsilon(1e-12));
  for (std::int64_t n = 0; n < f.size(); ++n) {
    const Point3 t = (g.to_world(g.unravel(n)) - cp).cwiseQuotient(grid.spacing);
    const double k = cubic_bspline(t.x()) * cubic_bspline(t.y()) * cubic_bspline(t.z());
    CHECK(f[n].x() == doctest::Approx(k).epsilon(1e-12));
    if ((t.array().abs() >= 2.0).any()) CHECK(f[n].x() == 0.0);
  }
}

TEST_CASE("partition of unity and dense evaluation agree with point evaluation") {
  const Geometry g(Index3(17, 13, 9), Point3(1.5, 2.0, 2.5), Point3(-4.0, 2.0, 1.0));
  BSplineGrid grid = BSplineGrid::covering(g, Point3(7.0, 8.0, 9.0));
  CHECK(grid.covers(g));
  grid.coefficients.colwise() = Eigen::Vector3d(0.3, -1.2, 2.0);
  const Field f = grid_to_dvf(grid, g);
  CHECK(((f.vectors().colwise() - Eigen::Vector3d(0.3, -1.2, 2.0)).cwiseAbs().array() < 1e-9).all());
  grid.coefficients = Eigen::Matrix3Xd::Random(3, grid.size());
  const Field r = grid_to_dvf(grid, g);
  for (std::int64_t n = 0; n < r.size(); n += 7)
    CHECK((r[n] - grid.evaluate(g.to_world(g.unravel(n)))).norm() < 1e-12);
}

TEST_CASE("grids that do not cover the volume are rejected") {
  const Geometry g(Index3(20, 20, 20), Point3::Ones());
  BSplineGrid grid = BSplineGrid::covering(Geometry(Index3(5, 5, 5), Point3::Ones()), Point3::Constant(5.0));
  CHECK_FALSE(grid.covers(g));
  CHECK_THROWS_AS(grid_to_dvf(grid, g), std::invalid_argument);
}

TEST_CASE("refinement is exact") {
  const Geometry g(Index3(21, 19, 15), Point3(1.0, 1.0, 1.5));
  BSplineGrid coarse = BSplineGrid::covering(g, Point3::Constant(8.0));
  coarse.coefficients = Eigen::Matrix3Xd::Random(3, coarse.size());
  const BSplineGrid fine = refine_grid(coarse, g);
  CHECK(fine.spacing.isApprox(Point3::Constant(4.0)));
  CHECK((grid_to_dvf(coarse, g).vectors() - grid_to_dvf(fine, g).vectors()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("perturbation moments") {
  const Geometry g(Index3(300, 300, 20), Point3::Ones());
  const BSplineGrid zero = BSplineGrid::covering(g, Point3::Constant(10.0));
  REQUIRE(zero.coefficients.size() >= 10000);
  const BSplineGrid p = perturb_grid(zero, 2.0, 5);
  CHECK(p.coefficients.cwiseAbs().maxCoeff() <= 2.0);
  CHECK(p.coefficients.cwiseAbs().mean() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(perturb_grid(zero, 2.0, 5).coefficients == p.coefficients);
  CHECK(perturb_grid(zero, 0.0, 5).coefficients == zero.coefficients);
  CHECK_THROWS_AS(perturb_grid(zero, -1.0, 5), std::invalid_argument);
}

}  // TEST_SUITE

TEST_SUITE("toyreg") {

TEST_CASE("zero iterations return the initialization") {
  const Image f = smooth_phantom(Index3(20, 20, 20), 2.0, 1);
  RegConfig cfg;
  cfg.iterations = 0;
  BSplineGrid init = registration_grid(f.geometry(), cfg);
  init.coefficients.setConstant(0.5);
  CHECK(register_images(f, f, cfg, init).coefficients == init.coefficients);
}

TEST_CASE("identical images stay near zero displacement") {
  const Image f = smooth_phantom(Index3(24, 24, 24), 2.0, 2);
  RegConfig cfg;
  cfg.iterations = 30;
  cfg.seed = 3;
  const BSplineGrid out = register_images(f, f, cfg, registration_grid(f.geometry(), cfg));
  CHECK(mean_norm(grid_to_dvf(out, f.geometry())) <= 0.1);
}

TEST_CASE("known translation is recovered and accepted steps never raise the cost") {
  const Image fixed = smooth_phantom(Index3(32, 32, 32), 2.0, 4);
  // moving(y) = fixed(y - 4 mm along x), so the true displacement is +4 mm.
  const Image moving = warp(fixed, testutil::constant_field(fixed.geometry(), Eigen::Vector3d(-4.0, 0.0, 0.0)));
  RegConfig cfg;
  cfg.iterations = 60;
  cfg.seed = 5;
  RegTrace trace;
  const BSplineGrid out = register_images(fixed, moving, cfg, registration_grid(fixed.geometry(), cfg), &trace);
  const Field u = grid_to_dvf(out, fixed.geometry());
  double sum = 0.0;
  int n = 0;
  for (int k = 8; k < 24; ++k)
    for (int j = 8; j < 24; ++j)
      for (int i = 8; i < 24; ++i, ++n) sum += u[fixed.geometry().linear(i, j, k)].x();
  CHECK(sum / n == doctest::Approx(4.0).epsilon(0.25));
  REQUIRE_FALSE(trace.accepted.empty());
  for (const auto& s : trace.accepted) CHECK(s.cost_after <= s.cost_before);
}

TEST_CASE("registration is deterministic per seed") {
  const Image f = smooth_phantom(Index3(20, 20, 20), 2.0, 6);
  const Image m = warp(f, testutil::constant_field(f.geometry(), Eigen::Vector3d(1.0, -1.0, 0.5)));
  RegConfig cfg;
  cfg.iterations = 10;
  cfg.seed = 9;
  const BSplineGrid zero = registration_grid(f.geometry(), cfg);
  CHECK(register_images(f, m, cfg, zero).coefficients == register_images(f, m, cfg, zero).coefficients);
}

TEST_CASE("ensembles") {
  const Image f = smooth_phantom(Index3(20, 20, 20), 2.0, 7);
  const Image m = warp(f, testutil::constant_field(f.geometry(), Eigen::Vector3d(1.0, 0.0, 0.0)));
  RegConfig cfg;
  cfg.iterations = 5;
  cfg.resolutions = 2;
  cfg.seed = 1;
  const RegistrationContext ctx(f, m, cfg.resolutions);

  CHECK_THROWS_AS(ensemble_initial(ctx, cfg, 1, 2.0, 3), std::invalid_argument);
  const auto flat = ensemble_initial(ctx, cfg, 2, 0.0, 3);
  CHECK(flat[0].vectors() == flat[1].vectors());
  const auto ens = ensemble_initial(ctx, cfg, 3, 2.0, 3);
  REQUIRE(ens.size() == 3);
  CHECK((ens[0].vectors() - ens[1].vectors()).cwiseAbs().maxCoeff() > 0.0);
  for (const auto& e : ens) CHECK(e.geometry() == f.geometry());

  const BSplineGrid tb = register_images(ctx, cfg, registration_grid(ctx, cfg));
  CHECK_THROWS_AS(ensemble_base(ctx, cfg, tb, 1, 2.0, 3), std::invalid_argument);
  const auto base = ensemble_base(ctx, cfg, tb, 2, 0.0, 3);
  RegConfig single = cfg;
  single.resolutions = 1;
  const Field direct = grid_to_dvf(register_images(ctx, single, tb), f.geometry());
  CHECK(base[0].vectors() == direct.vectors());
  CHECK(base[1].vectors() == direct.vectors());
}

TEST_CASE("perturbations shrink back toward the optimum on identical images") {
  const Image f = smooth_phantom(Index3(24, 24, 24), 2.0, 8);
  RegConfig cfg;
  cfg.iterations = 30;
  cfg.resolutions = 1;
  cfg.seed = 2;
  const RegistrationContext ctx(f, f, 1);
  const BSplineGrid zero = registration_grid(ctx, cfg);
  const int members = 6;
  const auto ens = ensemble_base(ctx, cfg, zero, members, 2.0, 11);
  std::vector<Field> starts;
  for (int i = 0; i < members; ++i)
    starts.push_back(grid_to_dvf(perturb_grid(zero, 2.0, derive_seed(11, {static_cast<std::uint64_t>(i)})), f.geometry()));
  CHECK(std_dvf(ens).values.data().mean() <= std_dvf(starts).values.data().mean());
}

}  // TEST_SUITE

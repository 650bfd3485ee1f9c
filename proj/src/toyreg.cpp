#include "regmap/toyreg.hpp"

#include "regmap/filters.hpp"
#include "regmap/parallel.hpp"
#include "regmap/random.hpp"

#include <cmath>
#include <stdexcept>

namespace regmap {
namespace {

struct AxisTable {
  std::vector<int> base;
  std::vector<std::array<double, 4>> w;
};

AxisTable axis_table(const BSplineGrid& grid, const Geometry& g, int axis) {
  AxisTable t;
  const int n = g.dims[axis];
  t.base.resize(n);
  t.w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double s = (g.origin[axis] + i * g.spacing[axis] - grid.origin[axis]) / grid.spacing[axis];
    double f = std::floor(s);
    double u = s - f;
    if (u > 1.0 - 1e-12) {
      f += 1.0;
      u = 0.0;
    }
    t.base[i] = static_cast<int>(f) - 1;
    t.w[i] = cubic_bspline_weights(u);
  }
  return t;
}

/// SSD optimization of `opt` at one pyramid level.
class LevelOptimizer {
 public:
  LevelOptimizer(const RegistrationContext::Level& level, const BSplineGrid& init, BSplineGrid& opt)
      : level_(level), opt_(opt), geometry_(level.fixed.geometry()), init_field_(grid_to_dvf(init, geometry_)) {
    for (int a = 0; a < 3; ++a) tables_[a] = axis_table(opt_, geometry_, a);
  }

  void run(const RegConfig& cfg, int level_index, RegTrace* trace) {
    const std::int64_t n_vox = geometry_.voxel_count();
    const std::int64_t wanted =
        std::max<std::int64_t>(cfg.min_samples, static_cast<std::int64_t>(std::ceil(cfg.sampling_fraction * n_vox)));
    const std::int64_t n_samples = std::min(n_vox, wanted);
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(level_index)}));
    std::uniform_int_distribution<std::int64_t> pick(0, n_vox - 1);

    const double step0 = cfg.step_mm * std::ldexp(1.0, level_index);
    double step = step0;
    samples_.resize(n_samples);
    Eigen::Matrix3Xd grad(3, opt_.size());

    for (int it = 0; it < cfg.iterations; ++it) {
      for (auto& s : samples_) s = pick(rng);
      grad.setZero();
      const double before = cost(opt_.coefficients, &grad);
      if (!std::isfinite(before)) throw std::runtime_error("register: non-finite cost");
      const double gmax = grad.colwise().norm().maxCoeff();
      if (gmax == 0.0) break;

      const Eigen::Matrix3Xd trial = opt_.coefficients - (step / gmax) * grad;
      const double after = cost(trial, nullptr);
      if (!std::isfinite(after)) throw std::runtime_error("register: non-finite cost");
      if (after <= before) {
        opt_.coefficients = trial;
        if (trace) trace->accepted.push_back({level_index, it, before, after});
        step = std::min(step * 1.1, step0);
      } else {
        if (trace) ++trace->rejected;
        step *= 0.5;
        if (step < 1e-4 * step0) break;
      }
    }
  }

 private:
  /// Mean squared residual over the current samples; optionally accumulates d(cost)/d(coefficients).
  double cost(const Eigen::Matrix3Xd& coef, Eigen::Matrix3Xd* grad) const {
    const Image& fixed = level_.fixed;
    const Image& moving = level_.moving;
    const auto& gm = level_.moving_gradient;
    const Geometry& mg = moving.geometry();
    const double inv_n = 1.0 / static_cast<double>(samples_.size());
    double total = 0.0;

    for (const std::int64_t v : samples_) {
      const Index3 idx = geometry_.unravel(v);
      const auto& wx = tables_[0].w[idx.x()];
      const auto& wy = tables_[1].w[idx.y()];
      const auto& wz = tables_[2].w[idx.z()];
      const int bx = tables_[0].base[idx.x()];
      const int by = tables_[1].base[idx.y()];
      const int bz = tables_[2].base[idx.z()];

      Eigen::Vector3d u = init_field_[v];
      for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b) {
          const double wbc = wy[b] * wz[c];
          const std::int64_t row = opt_.linear(bx, by + b, bz + c);
          for (int a = 0; a < 4; ++a) u += (wx[a] * wbc) * coef.col(row + a);
        }

      const Point3 y = geometry_.to_world(idx) + u;
      const auto st = detail::trilinear_stencil(mg, mg.to_continuous_index(y));
      double m = 0.0;
      Eigen::Vector3d dm = Eigen::Vector3d::Zero();
      for (int q = 0; q < 8; ++q) {
        const double w = st.weights[q];
        m += w * moving[st.offsets[q]];
        if (grad) dm += w * Eigen::Vector3d(gm[0][st.offsets[q]], gm[1][st.offsets[q]], gm[2][st.offsets[q]]);
      }
      const double r = fixed[v] - m;
      total += r * r;

      if (grad) {
        const Eigen::Vector3d g = (-2.0 * r * inv_n) * dm;
        for (int c = 0; c < 4; ++c)
          for (int b = 0; b < 4; ++b) {
            const double wbc = wy[b] * wz[c];
            const std::int64_t row = opt_.linear(bx, by + b, bz + c);
            for (int a = 0; a < 4; ++a) grad->col(row + a) += (wx[a] * wbc) * g;
          }
      }
    }
    return total * inv_n;
  }

  const RegistrationContext::Level& level_;
  BSplineGrid& opt_;
  const Geometry& geometry_;
  Field init_field_;
  std::array<AxisTable, 3> tables_;
  std::vector<std::int64_t> samples_;
};

}  // namespace

void RegConfig::validate() const {
  if (resolutions < 1) throw std::invalid_argument("RegConfig: resolutions must be >= 1");
  if (iterations < 0) throw std::invalid_argument("RegConfig: iterations must be >= 0");
  if (!(step_mm > 0.0)) throw std::invalid_argument("RegConfig: step size must be > 0");
  if (!(sampling_fraction > 0.0 && sampling_fraction <= 1.0))
    throw std::invalid_argument("RegConfig: sampling fraction must be in (0, 1]");
  if (min_samples < 1) throw std::invalid_argument("RegConfig: min_samples must be >= 1");
  if (!(grid_spacing.array() > 0.0).all()) throw std::invalid_argument("RegConfig: grid spacing must be > 0");
}

RegistrationContext::RegistrationContext(const Image& fixed, const Image& moving, int resolutions) {
  if (resolutions < 1) throw std::invalid_argument("registration: resolutions must be >= 1");
  levels_.reserve(resolutions);
  Image f = fixed;
  Image m = moving;
  for (int l = 0; l < resolutions; ++l) {
    if (l > 0) {
      f = downsample2(f);
      m = downsample2(m);
    }
    Level lv{f, m, gradient(m)};
    levels_.push_back(std::move(lv));
  }

  const Geometry& g0 = levels_[0].fixed.geometry();
  Point3 hi = g0.last_center();
  for (const auto& lv : levels_) hi = hi.cwiseMax(lv.fixed.geometry().last_center());
  support_.spacing = g0.spacing;
  support_.origin = g0.origin;
  for (int a = 0; a < 3; ++a)
    support_.dims[a] = static_cast<int>(std::ceil((hi[a] - g0.origin[a]) / g0.spacing[a] - 1e-9)) + 1;
}

BSplineGrid registration_grid(const RegistrationContext& ctx, const RegConfig& cfg) {
  return BSplineGrid::covering(ctx.support(), cfg.grid_spacing);
}

BSplineGrid registration_grid(const Geometry& fixed, const RegConfig& cfg) {
  // Same support rule as RegistrationContext without building the pyramid.
  Geometry g = fixed;
  Point3 hi = fixed.last_center();
  for (int l = 1; l < cfg.resolutions; ++l) {
    Geometry c;
    c.dims = ((g.dims.array() + 1) / 2).max(1);
    c.spacing = 2.0 * g.spacing;
    c.origin = g.origin + 0.5 * g.spacing;
    hi = hi.cwiseMax(c.last_center());
    g = c;
  }
  Geometry support = fixed;
  for (int a = 0; a < 3; ++a)
    support.dims[a] = static_cast<int>(std::ceil((hi[a] - fixed.origin[a]) / fixed.spacing[a] - 1e-9)) + 1;
  return BSplineGrid::covering(support, cfg.grid_spacing);
}

BSplineGrid register_images(const RegistrationContext& ctx, const RegConfig& cfg, const BSplineGrid& init,
                            RegTrace* trace) {
  cfg.validate();
  if (cfg.resolutions > ctx.levels()) throw std::invalid_argument("register: context has too few pyramid levels");
  const BSplineGrid layout = registration_grid(ctx, cfg);
  if (!init.same_layout(layout) || init.coefficients.cols() != layout.size())
    throw std::invalid_argument("register: init grid does not match the registration grid layout");
  if (cfg.iterations == 0) return init;

  const int coarsest = cfg.resolutions - 1;
  BSplineGrid opt = BSplineGrid::covering(ctx.support(), cfg.grid_spacing * std::ldexp(1.0, coarsest));
  for (int l = coarsest; l >= 0; --l) {
    if (l < coarsest) opt = refine_grid(opt, ctx.support());
    LevelOptimizer(ctx.level(l), init, opt).run(cfg, l, trace);
  }

  BSplineGrid out = init;
  out.coefficients += opt.coefficients;
  return out;
}

BSplineGrid register_images(const Image& fixed, const Image& moving, const RegConfig& cfg, const BSplineGrid& init,
                            RegTrace* trace) {
  const RegistrationContext ctx(fixed, moving, cfg.resolutions);
  return register_images(ctx, cfg, init, trace);
}

std::vector<Field> ensemble_initial(const RegistrationContext& ctx, const RegConfig& cfg, int members,
                                    double range_mm, std::uint64_t seed) {
  if (members < 2) throw std::invalid_argument("ensemble: at least 2 members required");
  const BSplineGrid zero = registration_grid(ctx, cfg);
  std::vector<Field> out(members);
  parallel_for(members, [&](std::int64_t i) {
    const BSplineGrid init = perturb_grid(zero, range_mm, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    out[i] = grid_to_dvf(register_images(ctx, cfg, init), ctx.fixed_geometry());
  });
  return out;
}

std::vector<Field> ensemble_base(const RegistrationContext& ctx, const RegConfig& cfg, const BSplineGrid& t_b,
                                 int members, double range_mm, std::uint64_t seed) {
  if (members < 2) throw std::invalid_argument("ensemble: at least 2 members required");
  RegConfig single = cfg;
  single.resolutions = 1;
  std::vector<Field> out(members);
  parallel_for(members, [&](std::int64_t i) {
    const BSplineGrid init = perturb_grid(t_b, range_mm, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    out[i] = grid_to_dvf(register_images(ctx, single, init), ctx.fixed_geometry());
  });
  return out;
}

}  // namespace regmap

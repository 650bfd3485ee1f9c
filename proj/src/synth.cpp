#include "regmap/synth.hpp"

#include "regmap/filters.hpp"
#include "regmap/random.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace regmap {
namespace {

double segment_distance2(const Point3& p, const Point3& a, const Point3& b) {
  const Point3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).squaredNorm();
}

Image smoothed_noise(const Geometry& g, double sigma_mm, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Image noise(g);
  for (std::int64_t v = 0; v < noise.size(); ++v) noise[v] = n01(rng);
  Image s = gaussian_smooth(noise, sigma_mm);
  const double sd = std::sqrt((s.data() - s.data().mean()).square().mean());
  if (sd > 0.0) s.data() /= sd;
  return s;
}

}  // namespace

Phantom make_phantom(const Index3& dims, const Point3& spacing, std::uint64_t seed, const PhantomOptions& opt) {
  if ((dims.array() < 16).any()) throw std::invalid_argument("phantom: dims must be >= 16 per axis");
  const Geometry g(dims, spacing);
  const Point3 extent = g.last_center();
  Rng rng(derive_seed(seed, {1}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_point = [&](double margin) {
    Point3 p;
    for (int a = 0; a < 3; ++a) p[a] = extent[a] * (margin + (1.0 - 2.0 * margin) * unit(rng));
    return p;
  };

  const double range = opt.max_intensity - opt.min_intensity;

  struct Tube {
    Point3 a, b;
    double radius, contrast;
  };
  struct Blob {
    Point3 c;
    double radius, contrast;
  };
  std::vector<Tube> tubes(opt.tubes);
  for (auto& t : tubes) {
    t.a = random_point(0.0);
    t.b = random_point(0.0);
    t.radius = 1.5 + 2.0 * unit(rng);
    t.contrast = range * (0.35 + 0.2 * unit(rng));
  }
  std::vector<Blob> blobs(opt.blobs);
  for (auto& b : blobs) {
    b.c = random_point(0.1);
    b.radius = 3.0 + 6.0 * unit(rng);
    b.contrast = range * (unit(rng) < 0.5 ? -0.2 : 0.3) * (0.6 + 0.4 * unit(rng));
  }
  const Point3 hom_center = random_point(0.3);
  Point3 hom_radii;
  for (int a = 0; a < 3; ++a) hom_radii[a] = extent[a] * (0.14 + 0.06 * unit(rng));
  const double hom_level = opt.min_intensity + 0.12 * range;

  const Image background = smoothed_noise(g, 0.25 * extent.maxCoeff(), rng);
  const Image texture = smoothed_noise(g, 2.0 * spacing.maxCoeff(), rng);

  Phantom out{Image(g), Volume<std::uint8_t>(g)};
  const std::int64_t n = g.voxel_count();
  for (std::int64_t v = 0; v < n; ++v) {
    const Point3 p = g.to_world(g.unravel(v));
    const Point3 q = (p - hom_center).cwiseQuotient(hom_radii);
    if (q.squaredNorm() <= 1.0) {
      out.image[v] = hom_level;
      out.homogeneous[v] = 1;
      continue;
    }
    double value = opt.min_intensity + range * (0.35 + 0.08 * background[v]) + range * 0.05 * texture[v];
    for (const auto& t : tubes) value += t.contrast * std::exp(-0.5 * segment_distance2(p, t.a, t.b) / (t.radius * t.radius));
    for (const auto& b : blobs) {
      const double d = (p - b.c).norm();
      value += b.contrast / (1.0 + std::exp((d - b.radius) / 1.0));
    }
    out.image[v] = std::clamp(value, opt.min_intensity, opt.max_intensity);
  }
  return out;
}

Field generate_random_dvf(const Geometry& geometry, double amplitude, double sigma_mm, std::uint64_t seed) {
  if (amplitude < 0.0) throw std::invalid_argument("random dvf: amplitude must be >= 0");
  if (!(sigma_mm > 0.0)) throw std::invalid_argument("random dvf: sigma must be > 0");
  Field f(geometry);
  if (amplitude == 0.0) return f;

  Rng rng(derive_seed(seed, {2}));
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (int axis = 0; axis < 3; ++axis) {
    Image noise(geometry);
    for (std::int64_t v = 0; v < noise.size(); ++v) noise[v] = u(rng);
    const Image s = gaussian_smooth(noise, sigma_mm);
    f.vectors().row(axis) = s.data().matrix().transpose();
  }
  const double max_norm = f.vectors().colwise().norm().maxCoeff();
  if (max_norm > 0.0) f.vectors() *= amplitude / max_norm;
  return f;
}

Image true_error_map(const Field& t_b, const Field& t_true) {
  require_same_geometry(t_b.geometry(), t_true.geometry(), "true_error_map");
  Image out(t_b.geometry());
  out.data() = (t_b.vectors() - t_true.vectors()).colwise().norm().transpose().array();
  return out;
}

namespace {

// Edge clamping concentrates the kernel mass of a wide Gaussian on border
// samples, so the truth is drawn on a grid padded by the kernel radius, cropped
// and rescaled to the amplitude.
Field padded_random_dvf(const Geometry& g, double amplitude, double sigma_mm, std::uint64_t seed) {
  Index3 pad;
  for (int a = 0; a < 3; ++a) pad[a] = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_mm / g.spacing[a])));
  Geometry big = g;
  big.dims = g.dims + 2 * pad;
  big.origin = g.origin - (pad.cast<double>().array() * g.spacing.array()).matrix();
  const Field wide = generate_random_dvf(big, amplitude, sigma_mm, seed);
  Field out(g);
  for (std::int64_t v = 0; v < out.size(); ++v) out[v] = wide[big.linear(g.unravel(v) + pad)];
  const double max_norm = out.vectors().colwise().norm().maxCoeff();
  if (max_norm > 0.0) out.vectors() *= amplitude / max_norm;
  return out;
}

}  // namespace

SyntheticPair make_synthetic_pair(const std::string& id, const PairOptions& opt, std::uint64_t seed) {
  Phantom ph = make_phantom(opt.dims, opt.spacing, derive_seed(seed, {10}));
  const Geometry& g = ph.image.geometry();
  SyntheticPair pair;
  pair.id = id;
  pair.moving = std::move(ph.image);
  pair.truth = padded_random_dvf(g, opt.amplitude_mm, opt.sigma_mm, derive_seed(seed, {11}));
  pair.fixed = warp(pair.moving, pair.truth);

  Rng rng(derive_seed(seed, {12}));
  std::normal_distribution<double> noise(0.0, opt.noise_sd);
  if (opt.noise_sd > 0.0) {
    for (std::int64_t v = 0; v < pair.fixed.size(); ++v) pair.fixed[v] += noise(rng);
    for (std::int64_t v = 0; v < pair.moving.size(); ++v) pair.moving[v] += noise(rng);
  }

  // Homogeneous region expressed on the fixed grid.
  const Image hom_moving = ph.homogeneous.cast<double>();
  const Image hom_fixed = warp(hom_moving, pair.truth);
  pair.homogeneous = Volume<std::uint8_t>(g);
  for (std::int64_t v = 0; v < hom_fixed.size(); ++v) pair.homogeneous[v] = hom_fixed[v] > 0.5 ? 1 : 0;
  return pair;
}

}  // namespace regmap

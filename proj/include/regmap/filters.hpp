#pragma once

#include "regmap/volume.hpp"

#include <array>
#include <span>
#include <vector>

namespace regmap {

/// Sampled, unit-sum Gaussian with radius ceil(3 sigma) (at least 1). Sigma in voxels.
std::vector<double> gaussian_kernel(double sigma_voxels);

/// Edge-clamped separable convolution; an empty kernel leaves that axis untouched.
Image convolve_separable(const Image& in, const std::array<std::vector<double>, 3>& kernels);

/// Isotropic Gaussian smoothing with sigma given in mm.
Image gaussian_smooth(const Image& in, double sigma_mm);

/// Derivative (per mm) of the Gaussian-smoothed image along one axis.
/// The derivative kernel is the central difference of the sampled Gaussian.
Image gaussian_derivative(const Image& in, double sigma_mm, int axis);

/// Central differences in mm, one-sided at the borders.
std::array<Image, 3> gradient(const Image& in);

/// Smooth (sigma = 1 voxel) then resample at half resolution.
Image downsample2(const Image& in);

/// Sliding 1D operations applied line by line along an axis.
template <typename Fn>
Image apply_along_axis(const Image& in, int axis, Fn&& fn);

}  // namespace regmap

#include "regmap/filters_impl.hpp"

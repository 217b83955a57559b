#pragma once

// Pixel-parallel kernels. `parallel` is what the pipeline calls; `serial` is
// a straightforward reference kept so tests can pin the parallel versions.
// Each parallel kernel writes every output element from a fixed summation
// order, so results do not depend on the thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "perturbx/types.hpp"

namespace perturbx::kernels {

/// Normalized 1-D Gaussian taps for offsets -radius..radius, radius = ceil(3*sigma).
std::vector<double> gaussian_taps(double sigma);

/// Half-sample symmetric reflection (... c b a | a b c ... x y z | z y x ...),
/// valid for any offset, including ones wider than the signal.
int reflect_index(int i, int n);

namespace serial {

/// Direct 2-D convolution with the outer product of gaussian_taps.
void gaussian_blur(std::span<const double> in, std::span<double> out, int height, int width, double sigma);

void combine(const SegmentMaskStack& stack, std::span<const std::uint8_t> sample, std::span<double> out);

void apply_perturbation(const Image& image, std::span<const double> map, std::span<const float> color,
                        std::span<float> out);

/// Returns the number of pixels whose mask total fell below the cutoff.
std::size_t project_per_pixel(std::span<const double> weights, const SegmentMaskStack& stack,
                              std::span<double> out);

}  // namespace serial

namespace parallel {

/// Separable horizontal-then-vertical pass.
void gaussian_blur(std::span<const double> in, std::span<double> out, int height, int width, double sigma);

/// Blurs every plane of a segment-major stack in place.
void gaussian_blur_planes(std::span<double> planes, int n_planes, int height, int width, double sigma);

void combine(const SegmentMaskStack& stack, std::span<const std::uint8_t> sample, std::span<double> out);

void apply_perturbation(const Image& image, std::span<const double> map, std::span<const float> color,
                        std::span<float> out);

std::size_t project_per_pixel(std::span<const double> weights, const SegmentMaskStack& stack,
                              std::span<double> out);

}  // namespace parallel

/// Mask totals below this produce a zero per-pixel attribution.
inline constexpr double kMinMaskTotal = 1e-9;

}  // namespace perturbx::kernels

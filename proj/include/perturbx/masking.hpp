#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "perturbx/types.hpp"

namespace perturbx {

/// mask_s(p) = 1 iff label(p) == s.
SegmentMaskStack indicator_masks(const SegmentMap& segments);

/// Bilinearly upsamples each segment's one-hot grid cell to height x width,
/// sampling at cell centers aligned to pixel centers (edge cells clamp).
/// Throws InvalidArgument unless the stack came from a grid of `grid`.
SegmentMaskStack smooth_bilinear(const SegmentMaskStack& stack, GridShape grid, int height, int width);

/// Convolves each mask with a normalized Gaussian, radius ceil(3*sigma),
/// reflected borders.
SegmentMaskStack smooth_gaussian(const SegmentMaskStack& stack, double sigma);

/// Indicator masks of `segments` smoothed per `config`.
SegmentMaskStack build_masks(const SegmentMap& segments, const SmoothingConfig& config);

/// Sum of the masks of the segments flagged in `sample`, clipped to [0,1].
std::vector<double> combine(const SegmentMaskStack& stack, std::span<const std::uint8_t> sample);

}  // namespace perturbx

#pragma once

#include <array>
#include <string>

#include "perturbx/types.hpp"

namespace perturbx::harness {

/// Two-color gradient used for overlays: low values blue, high values red.
inline constexpr std::array<float, 3> kHeatLow{0.0f, 0.0f, 1.0f};
inline constexpr std::array<float, 3> kHeatHigh{1.0f, 0.0f, 0.0f};

/// Min-max normalizes `map` (a constant map maps to 0), colors it along
/// kHeatLow -> kHeatHigh and blends it at alpha 0.5 over `base`, which must
/// be a unit-range gray or RGB image of the same size. Returns RGB.
Image heatmap_overlay(const PixelMap& map, const Image& base);

/// heatmap_overlay written as PNG.
void render_heatmap(const PixelMap& map, const Image& base, const std::string& path);

}  // namespace perturbx::harness

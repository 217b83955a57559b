#pragma once

#include <array>
#include <vector>

#include "perturbx/types.hpp"

namespace perturbx {

/// Split an HxW image into rows x cols cells. Pixel (r, c) gets label
/// floor(r*rows/H)*cols + floor(c*cols/W).
SegmentMap grid_segment(int height, int width, int rows, int cols);

struct SlicOptions {
  double compactness = 10.0;
  int max_iter = 10;
};

/// SLIC superpixels over (L, a, b, y, x). Centers start on a regular grid
/// nudged to the lowest-gradient pixel of their 3x3 neighbourhood, so the
/// result is fully deterministic. Components smaller than a quarter of the
/// nominal segment area are merged into their largest neighbour, and labels
/// are renumbered by first occurrence in scan order.
///
/// A single-color image falls back to a ceil(sqrt(n))^2 grid and sets
/// SegmentMap::degenerate_fallback.
SegmentMap slic_segment(const Image& image, int n_segments, const SlicOptions& options = {});

/// CIELAB (D65) of a unit-range image, one triple per pixel. Gray images are
/// treated as R = G = B.
std::vector<std::array<double, 3>> to_lab(const Image& image);

/// True when every segment of the map is a single 4-connected region.
bool segments_are_4_connected(const SegmentMap& map);

}  // namespace perturbx

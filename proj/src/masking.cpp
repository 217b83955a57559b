#include "perturbx/masking.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/kernels.hpp"

namespace perturbx {

SegmentMaskStack indicator_masks(const SegmentMap& segments) {
  if (segments.labels.size() != segments.pixel_count() || segments.n_segments < 1)
    throw InvalidArgument("indicator_masks: malformed segment map");
  SegmentMaskStack stack;
  stack.n_segments = segments.n_segments;
  stack.height = segments.height;
  stack.width = segments.width;
  stack.source_grid = segments.grid;
  stack.masks.assign(stack.plane_size() * stack.n_segments, 0.0);
  for (std::size_t p = 0; p < segments.labels.size(); ++p) {
    const int s = segments.labels[p];
    if (s < 0 || s >= segments.n_segments) throw InvalidArgument("indicator_masks: label out of range");
    stack.masks[stack.plane_size() * s + p] = 1.0;
  }
  return stack;
}

namespace {

struct AxisWeights {
  int lo, hi;
  double w_hi;  // weight of cell `hi`; cell `lo` gets 1 - w_hi
};

// Align-centers bilinear: output pixel i maps to source coordinate
// (i + 0.5) * cells / size - 0.5, clamped to the first/last cell center.
std::vector<AxisWeights> axis_weights(int cells, int size) {
  std::vector<AxisWeights> out(size);
  for (int i = 0; i < size; ++i) {
    double src = (i + 0.5) * cells / size - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(cells - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, cells - 1);
    out[i] = {lo, hi, src - lo};
  }
  return out;
}

double axis_value(const AxisWeights& w, int cell) {
  double v = 0.0;
  if (w.lo == cell) v += 1.0 - w.w_hi;
  if (w.hi == cell) v += w.w_hi;
  return v;
}

}  // namespace

SegmentMaskStack smooth_bilinear(const SegmentMaskStack& stack, GridShape grid, int height, int width) {
  if (!stack.source_grid || *stack.source_grid != grid)
    throw InvalidArgument("bilinear smoothing requires a grid segmentation of the given shape");
  if (height < 1 || width < 1) throw InvalidArgument("smooth_bilinear: output dimensions must be positive");

  const auto row_w = axis_weights(grid.rows, height);
  const auto col_w = axis_weights(grid.cols, width);

  SegmentMaskStack out;
  out.n_segments = stack.n_segments;
  out.height = height;
  out.width = width;
  out.source_grid = grid;
  out.smoothing = {SmoothingMethod::bilinear_upsample, 0.0, grid};
  out.masks.assign(out.plane_size() * out.n_segments, 0.0);

#pragma omp parallel for schedule(static)
  for (int s = 0; s < out.n_segments; ++s) {
    const int cell_row = s / grid.cols, cell_col = s % grid.cols;
    auto mask = out.mask(s);
    for (int r = 0; r < height; ++r) {
      const double vr = axis_value(row_w[r], cell_row);
      if (vr == 0.0) continue;
      for (int c = 0; c < width; ++c)
        mask[static_cast<std::size_t>(r) * width + c] = vr * axis_value(col_w[c], cell_col);
    }
  }
  return out;
}

SegmentMaskStack smooth_gaussian(const SegmentMaskStack& stack, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("smooth_gaussian: sigma must be positive");
  SegmentMaskStack out = stack;
  out.smoothing = {SmoothingMethod::gaussian_filter, sigma, {}};
  kernels::parallel::gaussian_blur_planes(out.masks, out.n_segments, out.height, out.width, sigma);
  // Rounding can leave values a few ulps outside [0,1].
  for (double& v : out.masks) v = std::clamp(v, 0.0, 1.0);
  return out;
}

SegmentMaskStack build_masks(const SegmentMap& segments, const SmoothingConfig& config) {
  auto stack = indicator_masks(segments);
  switch (config.method) {
    case SmoothingMethod::none:
      return stack;
    case SmoothingMethod::bilinear_upsample:
      return smooth_bilinear(stack, config.grid_shape, segments.height, segments.width);
    case SmoothingMethod::gaussian_filter:
      return smooth_gaussian(stack, config.sigma);
  }
  throw InvalidArgument("build_masks: unknown smoothing method");
}

std::vector<double> combine(const SegmentMaskStack& stack, std::span<const std::uint8_t> sample) {
  if (static_cast<int>(sample.size()) != stack.n_segments)
    throw InvalidArgument(fmt::format("combine: sample has {} entries, stack has {} segments", sample.size(),
                                      stack.n_segments));
  std::vector<double> out(stack.plane_size());
  kernels::parallel::combine(stack, sample, out);
  return out;
}

}  // namespace perturbx

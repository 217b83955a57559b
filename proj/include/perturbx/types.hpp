#pragma once

// Data model shared by every pipeline stage. These are plain values: build
// them, run validate(), then pass them around by const reference.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perturbx {

enum class ColorSpace { raw_0_255, unit_0_1, normalized_zero_mean };

struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;  // row-major, channel-interleaved
  ColorSpace space = ColorSpace::unit_0_1;

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  float at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

/// Grid shape in cells.
struct GridShape {
  int rows = 0;
  int cols = 0;
  bool operator==(const GridShape&) const = default;
};

struct SegmentMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> labels;  // row-major
  int n_segments = 0;
  // Set when the map came from grid_segment (or the SLIC grid fallback).
  std::optional<GridShape> grid;
  // SLIC fell back to a grid because the image had a single color.
  bool degenerate_fallback = false;

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

enum class SmoothingMethod { none, bilinear_upsample, gaussian_filter };

struct SmoothingConfig {
  SmoothingMethod method = SmoothingMethod::none;
  double sigma = 0.0;        // gaussian_filter only
  GridShape grid_shape{};    // bilinear_upsample only
};

/// One perturbedness map per segment, 1 = pixel fully replaced.
struct SegmentMaskStack {
  int n_segments = 0;
  int height = 0;
  int width = 0;
  std::vector<double> masks;  // segment-major, each H*W row-major
  SmoothingConfig smoothing;
  std::optional<GridShape> source_grid;

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<const double> mask(int segment) const {
    return {masks.data() + plane_size() * segment, plane_size()};
  }
  std::span<double> mask(int segment) {
    return {masks.data() + plane_size() * segment, plane_size()};
  }
};

enum class SampleOrigin { only_one, all_but_one, random, entropic };

/// Binary matrix, entry 1 = segment perturbed in that sample.
struct SampleSet {
  int n_samples = 0;
  int n_segments = 0;
  std::vector<std::uint8_t> indicators;  // row-major n_samples x n_segments
  SampleOrigin origin = SampleOrigin::random;
  std::optional<std::uint64_t> seed;
  // Entropic request exceeded 2^n and was cut to the full enumeration.
  bool truncated = false;

  std::span<const std::uint8_t> row(int sample) const {
    return {indicators.data() + static_cast<std::size_t>(sample) * n_segments,
            static_cast<std::size_t>(n_segments)};
  }
  bool perturbed(int sample, int segment) const {
    return indicators[static_cast<std::size_t>(sample) * n_segments + segment] != 0;
  }
};

struct PredictionRecord {
  int sample_index = 0;
  double output = 0.0;
  std::optional<std::vector<double>> full_scores;
};

enum class AttributionMethod { CIU, PDA, LIME, SHAP, RISE };

struct PixelMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major
};

struct AttributionResult {
  std::vector<double> segment_weights;
  std::optional<PixelMap> pixel_map;
  AttributionMethod method = AttributionMethod::PDA;
  double reference_output = 0.0;
  // Set by CIU when all outputs are equal.
  bool degenerate = false;
};

// Validation returns every violated invariant; an empty list means valid.
using Violations = std::vector<std::string>;

Violations validate(const Image& image);
Violations validate(const SegmentMap& map);
Violations validate(const SmoothingConfig& config);
Violations validate(const SegmentMaskStack& stack);
Violations validate(const SampleSet& samples);
Violations validate(std::span<const PredictionRecord> records);
Violations validate(const AttributionResult& result,
                    std::optional<int> n_segments = std::nullopt,
                    std::optional<GridShape> image_dims = std::nullopt);

const char* to_string(ColorSpace space);
const char* to_string(SmoothingMethod method);
const char* to_string(SampleOrigin origin);
const char* to_string(AttributionMethod method);

// Inverse of to_string; throw InvalidArgument on unknown names.
ColorSpace color_space_from_string(const std::string& name);
SmoothingMethod smoothing_method_from_string(const std::string& name);
SampleOrigin sample_origin_from_string(const std::string& name);
AttributionMethod attribution_method_from_string(const std::string& name);

}  // namespace perturbx

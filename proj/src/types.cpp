#include "perturbx/types.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "perturbx/error.hpp"

namespace perturbx {

namespace {
constexpr double kPartitionTolerance = 1e-6;
}

Violations validate(const Image& image) {
  Violations out;
  if (image.height < 1 || image.width < 1) out.push_back("image dimensions must be positive");
  if (image.channels != 1 && image.channels != 3) out.push_back("channels must be 1 or 3");
  const std::size_t expected = static_cast<std::size_t>(std::max(image.height, 0)) *
                               std::max(image.width, 0) * std::max(image.channels, 0);
  if (image.data.size() != expected)
    out.push_back(fmt::format("data length {} != height*width*channels {}", image.data.size(), expected));
  for (float v : image.data) {
    if (!std::isfinite(v)) {
      out.push_back("non-finite pixel value");
      break;
    }
  }
  if (image.space == ColorSpace::unit_0_1) {
    for (float v : image.data) {
      if (v < 0.0f || v > 1.0f) {
        out.push_back("unit_0_1 image has a value outside [0,1]");
        break;
      }
    }
  }
  return out;
}

Violations validate(const SegmentMap& map) {
  Violations out;
  if (map.height < 1 || map.width < 1) out.push_back("segment map dimensions must be positive");
  if (map.labels.size() != map.pixel_count())
    out.push_back(fmt::format("labels length {} != height*width {}", map.labels.size(), map.pixel_count()));
  if (map.n_segments < 2) out.push_back("n_segments must be at least 2");
  std::vector<char> seen(std::max(map.n_segments, 0), 0);
  bool out_of_range = false;
  for (auto label : map.labels) {
    if (label < 0 || label >= map.n_segments) {
      out_of_range = true;
    } else {
      seen[label] = 1;
    }
  }
  if (out_of_range) out.push_back("label out of range");
  for (int s = 0; s < map.n_segments; ++s) {
    if (!seen[s]) {
      out.push_back(fmt::format("segment {} has no pixels", s));
      break;
    }
  }
  if (map.grid && map.grid->rows * map.grid->cols != map.n_segments)
    out.push_back("grid shape does not match n_segments");
  return out;
}

Violations validate(const SmoothingConfig& config) {
  Violations out;
  if (config.method == SmoothingMethod::gaussian_filter && !(config.sigma > 0.0))
    out.push_back("sigma must be positive for gaussian_filter");
  if (config.method == SmoothingMethod::bilinear_upsample &&
      (config.grid_shape.rows < 1 || config.grid_shape.cols < 1))
    out.push_back("grid_shape must be positive for bilinear_upsample");
  return out;
}

Violations validate(const SegmentMaskStack& stack) {
  Violations out = validate(stack.smoothing);
  if (stack.n_segments < 1) out.push_back("n_segments must be positive");
  const std::size_t plane = stack.plane_size();
  if (stack.masks.size() != plane * std::max(stack.n_segments, 0)) {
    out.push_back("masks length != n_segments*height*width");
    return out;
  }
  bool range_bad = false;
  bool binary_bad = false;
  for (double v : stack.masks) {
    if (!(v >= 0.0 && v <= 1.0)) range_bad = true;
    if (v != 0.0 && v != 1.0) binary_bad = true;
  }
  if (range_bad) out.push_back("mask value outside [0,1]");
  if (stack.smoothing.method == SmoothingMethod::none && binary_bad)
    out.push_back("unsmoothed mask is not a 0/1 indicator");
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0.0;
    for (int s = 0; s < stack.n_segments; ++s) sum += stack.masks[plane * s + p];
    if (sum > 1.0 + kPartitionTolerance || sum < -kPartitionTolerance) {
      out.push_back(fmt::format("partition sum exceeded at pixel {} (sum {})", p, sum));
      break;
    }
  }
  return out;
}

Violations validate(const SampleSet& samples) {
  Violations out;
  if (samples.n_samples < 0 || samples.n_segments < 1) out.push_back("sample set dimensions invalid");
  const std::size_t expected =
      static_cast<std::size_t>(std::max(samples.n_samples, 0)) * std::max(samples.n_segments, 0);
  if (samples.indicators.size() != expected) {
    out.push_back("indicator matrix shape != n_samples x n_segments");
    return out;
  }
  for (auto v : samples.indicators) {
    if (v > 1) {
      out.push_back("indicator entry not in {0,1}");
      break;
    }
  }
  if (samples.origin == SampleOrigin::only_one || samples.origin == SampleOrigin::all_but_one) {
    if (samples.n_samples != samples.n_segments + 1)
      out.push_back(fmt::format("{} sample set must have n_segments+1 rows", to_string(samples.origin)));
    bool has_zero_row = false;
    for (int i = 0; i < samples.n_samples && !has_zero_row; ++i) {
      auto r = samples.row(i);
      has_zero_row = std::all_of(r.begin(), r.end(), [](auto v) { return v == 0; });
    }
    if (!has_zero_row) out.push_back("sample set lacks the all-zeros reference row");
  }
  return out;
}

Violations validate(std::span<const PredictionRecord> records) {
  Violations out;
  std::vector<char> seen(records.size(), 0);
  for (const auto& r : records) {
    if (r.sample_index < 0 || static_cast<std::size_t>(r.sample_index) >= records.size()) {
      out.push_back("sample indices are not dense");
      return out;
    }
    if (seen[r.sample_index]) {
      out.push_back(fmt::format("duplicate sample index {}", r.sample_index));
      return out;
    }
    seen[r.sample_index] = 1;
  }
  return out;
}

Violations validate(const AttributionResult& result, std::optional<int> n_segments,
                    std::optional<GridShape> image_dims) {
  Violations out;
  if (n_segments && static_cast<int>(result.segment_weights.size()) != *n_segments)
    out.push_back("segment_weights length != n_segments");
  if (result.pixel_map) {
    const auto& pm = *result.pixel_map;
    if (pm.values.size() != static_cast<std::size_t>(pm.height) * pm.width)
      out.push_back("pixel_map length != height*width");
    if (image_dims && (pm.height != image_dims->rows || pm.width != image_dims->cols))
      out.push_back("pixel_map dims do not match the image");
  }
  return out;
}

const char* to_string(ColorSpace space) {
  switch (space) {
    case ColorSpace::raw_0_255: return "raw_0_255";
    case ColorSpace::unit_0_1: return "unit_0_1";
    case ColorSpace::normalized_zero_mean: return "normalized_zero_mean";
  }
  return "?";
}

const char* to_string(SmoothingMethod method) {
  switch (method) {
    case SmoothingMethod::none: return "none";
    case SmoothingMethod::bilinear_upsample: return "bilinear_upsample";
    case SmoothingMethod::gaussian_filter: return "gaussian_filter";
  }
  return "?";
}

const char* to_string(SampleOrigin origin) {
  switch (origin) {
    case SampleOrigin::only_one: return "only_one";
    case SampleOrigin::all_but_one: return "all_but_one";
    case SampleOrigin::random: return "random";
    case SampleOrigin::entropic: return "entropic";
  }
  return "?";
}

const char* to_string(AttributionMethod method) {
  switch (method) {
    case AttributionMethod::CIU: return "CIU";
    case AttributionMethod::PDA: return "PDA";
    case AttributionMethod::LIME: return "LIME";
    case AttributionMethod::SHAP: return "SHAP";
    case AttributionMethod::RISE: return "RISE";
  }
  return "?";
}

namespace {
template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& name, const Enum (&values)[N], const char* what) {
  for (Enum v : values)
    if (name == to_string(v)) return v;
  throw InvalidArgument(fmt::format("unknown {} '{}'", what, name));
}
}  // namespace

ColorSpace color_space_from_string(const std::string& name) {
  static constexpr ColorSpace all[] = {ColorSpace::raw_0_255, ColorSpace::unit_0_1,
                                       ColorSpace::normalized_zero_mean};
  return parse_enum(name, all, "color space");
}

SmoothingMethod smoothing_method_from_string(const std::string& name) {
  static constexpr SmoothingMethod all[] = {SmoothingMethod::none, SmoothingMethod::bilinear_upsample,
                                            SmoothingMethod::gaussian_filter};
  return parse_enum(name, all, "smoothing method");
}

SampleOrigin sample_origin_from_string(const std::string& name) {
  static constexpr SampleOrigin all[] = {SampleOrigin::only_one, SampleOrigin::all_but_one,
                                         SampleOrigin::random, SampleOrigin::entropic};
  return parse_enum(name, all, "sample origin");
}

AttributionMethod attribution_method_from_string(const std::string& name) {
  static constexpr AttributionMethod all[] = {AttributionMethod::CIU, AttributionMethod::PDA,
                                              AttributionMethod::LIME, AttributionMethod::SHAP,
                                              AttributionMethod::RISE};
  return parse_enum(name, all, "attribution method");
}

}  // namespace perturbx

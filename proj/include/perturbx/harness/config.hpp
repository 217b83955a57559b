#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "perturbx/serialize.hpp"
#include "perturbx/types.hpp"

namespace perturbx::harness {

struct SegmenterConfig {
  enum class Kind { grid, slic };
  Kind kind = Kind::grid;
  int rows = 7;
  int cols = 7;
  int n_segments = 49;
  double compactness = 10.0;
  int max_iter = 10;

  /// "grid:7x7" or "slic:49:10:10".
  std::string label() const;
};

struct SamplerConfig {
  SampleOrigin kind = SampleOrigin::random;
  int n_samples = 0;        // random and entropic only
  std::uint64_t seed = 0;   // random only

  /// "only_one", "random:400:seed=7", "entropic:400".
  std::string label() const;
  /// Label without the seed; used to group results by sampling and size.
  std::string size_label() const;
};

enum class Granularity { segment, pixel };
const char* to_string(Granularity granularity);

/// Replacement color. dataset_mean resolves to the dataset mean expressed in
/// the image's color space (0 for normalized images).
struct ColorPolicy {
  enum class Kind { dataset_mean, image_mean, explicit_values };
  Kind kind = Kind::dataset_mean;
  std::vector<float> values;

  std::string label() const;
};

struct PipelineConfig {
  SegmenterConfig segmenter;
  SmoothingConfig smoothing;
  SamplerConfig sampler;
  AttributionMethod attribution = AttributionMethod::RISE;
  Granularity granularity = Granularity::pixel;
  ColorPolicy color;
  int steps = 10;
  ColorPolicy occlusion{ColorPolicy::Kind::image_mean, {}};
};

/// "none", "bilinear" or "gaussian:<sigma>".
std::string smoothing_label(const SmoothingConfig& c);

Json to_json(const SegmenterConfig& c);
Json to_json(const SamplerConfig& c);
Json to_json(const ColorPolicy& c);
Json to_json(const PipelineConfig& c);

SegmenterConfig segmenter_from_json(const Json& j);
SamplerConfig sampler_from_json(const Json& j);
ColorPolicy color_policy_from_json(const Json& j);

/// Parses one pipeline and enforces its cross-field rules: CIU needs
/// only_one or all_but_one sampling, bilinear smoothing needs a grid
/// segmenter (its grid_shape defaults to the segmenter's). Throws
/// InvalidArgument on violations.
PipelineConfig pipeline_from_json(const Json& j);

/// Hex FNV-1a of the canonical JSON of the pipeline.
std::string config_hash(const PipelineConfig& c);

/// Key of everything that determines the model calls of a pipeline.
std::string model_call_key(const PipelineConfig& c);

struct MatrixExpansion {
  std::vector<PipelineConfig> pipelines;
  int pruned = 0;  // combinations dropped by the cross-field rules
};

/// Every field of `section` may hold a single value or a list; lists expand
/// to their cross product in field order segmenter, smoothing, sampler,
/// attribution, granularity, color, steps, occlusion. Combinations that
/// break a cross-field rule are pruned; a section with only one combination
/// rethrows its error instead.
MatrixExpansion expand_matrix(const Json& section);

/// Compact flag syntax, e.g. "grid:7x7", "slic:49", "gaussian:10",
/// "bilinear", "none", "random:400:7", "entropic:50", "only_one",
/// "dataset_mean", "image_mean", "0.5,0.5,0.5". Returns the JSON value the
/// matching config field would hold.
Json parse_flag_value(const std::string& field, const std::string& text);

struct Normalization {
  std::vector<float> mean;
  std::vector<float> std;
};

struct ImageSource {
  std::string id;
  std::string path;  // PNG; empty for synthetic images
  struct Synthetic {
    int height = 64;
    int width = 64;
    int channels = 3;
    std::uint64_t seed = 0;
  };
  std::optional<Synthetic> synthetic;
};

struct ModelSource {
  enum class Kind { endpoint, additive, logistic };
  Kind kind = Kind::additive;
  std::string endpoint;
  std::uint64_t seed = 0;
  int n_classes = 1;
  double gain = 1.0;
  double offset = 0.0;
};

struct ExperimentConfig {
  std::vector<ImageSource> images;
  std::optional<ModelSource> model;
  MatrixExpansion matrix;
  std::optional<Normalization> normalization;
  std::vector<float> dataset_mean{0.485f, 0.456f, 0.406f};  // unit-range RGB
  std::optional<int> target_class;
  int batch_size = 64;
  Json document;  // as given, after flag overrides
};

/// Parses a full experiment document. `overrides` maps pipeline field names
/// to JSON values that replace the document's.
ExperimentConfig experiment_from_json(Json document, const std::vector<std::pair<std::string, Json>>& overrides = {});

/// An endpoint string ("exec:...", "tcp:host:port"), a synthetic shorthand
/// ("additive:SEED[:CLASSES]", "logistic:SEED[:CLASSES]") or an object
/// {"endpoint": ...} / {"synthetic": "additive", "seed": ..., ...}.
ModelSource model_source_from_json(const Json& j);

}  // namespace perturbx::harness

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "perturbx/attribution.hpp"
#include "perturbx/evaluation.hpp"
#include "perturbx/harness/config.hpp"
#include "perturbx/model.hpp"
#include "perturbx/protocol.hpp"
#include "perturbx/types.hpp"

namespace perturbx::harness {

struct LoadedImage {
  std::string id;
  Image input;    // what the model sees (normalized when configured)
  Image display;  // unit range; segmentation and heatmaps use this
};

/// Smooth colored blobs on a gradient background, unit range, fully
/// determined by the seed.
Image synthetic_image(int height, int width, int channels, std::uint64_t seed);

/// (x - mean) / std per channel.
Image normalize(const Image& image, const Normalization& normalization);

LoadedImage load_image(const ImageSource& source, const std::optional<Normalization>& normalization);

/// Builds the predictor a model source describes. Synthetic models draw
/// coefficients uniform in +-1/sqrt(H*W) for input shape (H, W, C) and
/// explain class 0.
std::unique_ptr<Predictor> make_predictor(const ModelSource& source, int height, int width, int channels,
                                          const ConnectOptions& options = {});

struct RunOptions {
  int batch_size = 64;
  std::optional<int> target_class;
  std::vector<float> dataset_mean{0.485f, 0.456f, 0.406f};
  std::optional<Normalization> normalization;
  CuNormalization ciu_utility = CuNormalization::context_range;
};

/// Replacement color in the model's input space.
std::vector<float> resolve_color(const ColorPolicy& policy, const LoadedImage& image, const RunOptions& options);

struct Target {
  int class_index = 0;
  double score = 0.0;  // Y, the unperturbed score of class_index
};

/// The configured class, or the top class of the unperturbed image.
Target resolve_target(Predictor& predictor, const LoadedImage& image, const RunOptions& options);

/// Everything a pipeline's model calls depend on, and their results.
struct ModelCalls {
  SegmentMap segments;
  SegmentMaskStack masks;
  SampleSet samples;
  std::vector<float> color;
  std::vector<double> outputs;  // target-class score per sample row
  ReferenceOutputs reference;
};

/// Segments, masks and samples the image per `config`, then scores every
/// perturbed image plus the fully perturbed one, batch by batch.
std::shared_ptr<const ModelCalls> issue_model_calls(Predictor& predictor, const LoadedImage& image,
                                                    const PipelineConfig& config, const RunOptions& options,
                                                    const Target& target);

struct Explanation {
  std::shared_ptr<const ModelCalls> calls;
  AttributionResult attribution;
  PixelMap map;                 // per segment or per pixel per the config
  std::size_t dropped_pixels = 0;
};

/// Attribution for one pipeline. Issues model calls unless `calls` is given.
Explanation explain(Predictor& predictor, const LoadedImage& image, const PipelineConfig& config,
                    const RunOptions& options, const Target& target,
                    std::shared_ptr<const ModelCalls> calls = nullptr);

struct RunRecord {
  std::string config_hash;
  std::string image_id;
  std::string model;
  PipelineConfig config;
  int target_class = -1;
  int n_samples = 0;
  double lif = 0.0;
  double mif = 0.0;
  double srg = 0.0;
  double wall_seconds = 0.0;
  bool ok = false;
  std::string error;
};

struct AggregateRow {
  std::string table;                                     // "config", "sampling", "segmentation"
  std::vector<std::pair<std::string, std::string>> key;  // grouping columns
  int n_records = 0;
  int n_failed = 0;
  double lif_pct = 0.0;  // means over successful records, times 100
  double mif_pct = 0.0;
  double srg_pct = 0.0;
};

struct MatrixResult {
  std::vector<RunRecord> records;  // config-major, then image order
  std::vector<AggregateRow> aggregates;
  std::uint64_t model_call_sets = 0;  // distinct ModelCalls issued
  double wall_seconds = 0.0;

  int failures() const;
};

/// Per-config means, one row each.
std::vector<AggregateRow> aggregate_by_config(const std::vector<RunRecord>& records);
/// Means grouped by (sampler size, attribution).
std::vector<AggregateRow> aggregate_by_sampling(const std::vector<RunRecord>& records);
/// Means grouped by (segmenter + smoothing, granularity, attribution).
std::vector<AggregateRow> aggregate_by_segmentation(const std::vector<RunRecord>& records);

/// Runs every config on every image. Model calls are shared between configs
/// with equal model_call_key; failures are recorded per record. Images run
/// in parallel only when the predictor is thread safe; output order never
/// depends on scheduling.
MatrixResult run_matrix(const std::vector<PipelineConfig>& configs, const std::vector<LoadedImage>& images,
                        Predictor& predictor, const RunOptions& options);

/// Column order of write_records_csv.
extern const std::vector<std::string> kRecordColumns;

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

/// Configuration, model spec, environment and timings.
Json sidecar_json(const MatrixResult& result, const ExperimentConfig& config, const PredictorSpec& spec);

}  // namespace perturbx::harness

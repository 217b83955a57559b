#include "perturbx/harness/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>
#include <fmt/format.h>
#include <omp.h>

#include "perturbx/error.hpp"
#include "perturbx/harness/png_io.hpp"
#include "perturbx/masking.hpp"
#include "perturbx/perturbation.hpp"
#include "perturbx/sampling.hpp"
#include "perturbx/segmentation.hpp"

namespace perturbx::harness {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

Image synthetic_image(int height, int width, int channels, std::uint64_t seed) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3))
    throw InvalidArgument("synthetic images need positive size and 1 or 3 channels");
  const CounterRng rng(seed);
  std::uint64_t counter = 0;
  auto next = [&] { return rng.uniform(counter++); };

  Image image{height, width, channels, std::vector<float>(static_cast<std::size_t>(height) * width * channels),
              ColorSpace::unit_0_1};
  std::vector<double> top(channels), bottom(channels);
  for (int ch = 0; ch < channels; ++ch) {
    top[ch] = 0.2 + 0.6 * next();
    bottom[ch] = 0.2 + 0.6 * next();
  }
  for (int r = 0; r < height; ++r) {
    const double t = height > 1 ? static_cast<double>(r) / (height - 1) : 0.0;
    for (int c = 0; c < width; ++c)
      for (int ch = 0; ch < channels; ++ch)
        image.data[(static_cast<std::size_t>(r) * width + c) * channels + ch] =
            static_cast<float>(top[ch] + t * (bottom[ch] - top[ch]));
  }

  const double extent = std::min(height, width);
  for (int blob = 0; blob < 6; ++blob) {
    const double cy = next() * height, cx = next() * width;
    const double sigma = (0.08 + 0.15 * next()) * extent;
    std::vector<double> color(channels);
    for (auto& v : color) v = next();
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        const double d2 = (r + 0.5 - cy) * (r + 0.5 - cy) + (c + 0.5 - cx) * (c + 0.5 - cx);
        const double a = std::exp(-d2 / (2 * sigma * sigma));
        for (int ch = 0; ch < channels; ++ch) {
          float& px = image.data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
          px = static_cast<float>(px * (1.0 - a) + color[ch] * a);
        }
      }
  }
  return image;
}

Image normalize(const Image& image, const Normalization& normalization) {
  if (static_cast<int>(normalization.mean.size()) != image.channels ||
      static_cast<int>(normalization.std.size()) != image.channels)
    throw InvalidArgument(fmt::format("normalization has {} channels, image has {}", normalization.mean.size(),
                                      image.channels));
  Image out = image;
  out.space = ColorSpace::normalized_zero_mean;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const auto ch = i % image.channels;
    out.data[i] = (image.data[i] - normalization.mean[ch]) / normalization.std[ch];
  }
  return out;
}

LoadedImage load_image(const ImageSource& source, const std::optional<Normalization>& normalization) {
  LoadedImage loaded;
  loaded.id = source.id;
  if (source.synthetic) {
    const auto& s = *source.synthetic;
    loaded.display = synthetic_image(s.height, s.width, s.channels, s.seed);
  } else {
    loaded.display = read_png(source.path);
  }
  loaded.input = normalization ? normalize(loaded.display, *normalization) : loaded.display;
  return loaded;
}

std::unique_ptr<Predictor> make_predictor(const ModelSource& source, int height, int width, int channels,
                                          const ConnectOptions& options) {
  if (source.kind == ModelSource::Kind::endpoint) return connect_external(source.endpoint, options);
  const double scale = 1.0 / std::sqrt(static_cast<double>(height) * width);
  auto coeff = random_coefficients(height, width, source.seed, -scale, scale);
  if (source.kind == ModelSource::Kind::additive)
    return std::make_unique<AdditiveModel>(std::move(coeff), 0, source.n_classes, channels);
  return std::make_unique<LogisticModel>(std::move(coeff), 0, source.n_classes, channels, source.gain,
                                         source.offset);
}

std::vector<float> resolve_color(const ColorPolicy& policy, const LoadedImage& image, const RunOptions& options) {
  const int channels = image.input.channels;
  switch (policy.kind) {
    case ColorPolicy::Kind::image_mean:
      return channel_mean(image.input);
    case ColorPolicy::Kind::explicit_values:
      if (static_cast<int>(policy.values.size()) != channels)
        throw InvalidArgument(fmt::format("explicit color has {} values, image has {} channels",
                                          policy.values.size(), channels));
      return policy.values;
    case ColorPolicy::Kind::dataset_mean: {
      std::vector<float> mean = options.dataset_mean;
      if (channels == 1 && mean.size() == 3) mean = {(mean[0] + mean[1] + mean[2]) / 3.0f};
      if (static_cast<int>(mean.size()) != channels)
        throw InvalidArgument(fmt::format("dataset mean has {} values, image has {} channels", mean.size(),
                                          channels));
      if (options.normalization) {
        const auto& n = *options.normalization;
        if (static_cast<int>(n.mean.size()) != channels) throw InvalidArgument("normalization channel mismatch");
        for (int ch = 0; ch < channels; ++ch) mean[ch] = (mean[ch] - n.mean[ch]) / n.std[ch];
      }
      return mean;
    }
  }
  throw InvalidArgument("unknown color policy");
}

Target resolve_target(Predictor& predictor, const LoadedImage& image, const RunOptions& options) {
  const auto scores = predictor.predict_batch(std::span<const Image>(&image.input, 1));
  if (scores.size() != 1) throw TransportError(TransportError::Kind::malformed, "expected one score vector");
  Target target;
  target.class_index = options.target_class ? *options.target_class : top_class(scores.front());
  if (target.class_index < 0 || target.class_index >= static_cast<int>(scores.front().size()))
    throw InvalidArgument(fmt::format("target class {} out of range", target.class_index));
  target.score = scores.front()[target.class_index];
  return target;
}

std::shared_ptr<const ModelCalls> issue_model_calls(Predictor& predictor, const LoadedImage& image,
                                                    const PipelineConfig& config, const RunOptions& options,
                                                    const Target& target) {
  auto calls = std::make_shared<ModelCalls>();
  const Image& display = image.display;
  if (config.segmenter.kind == SegmenterConfig::Kind::grid) {
    calls->segments = grid_segment(display.height, display.width, config.segmenter.rows, config.segmenter.cols);
  } else {
    calls->segments = slic_segment(display, config.segmenter.n_segments,
                                   SlicOptions{config.segmenter.compactness, config.segmenter.max_iter});
  }
  calls->masks = build_masks(calls->segments, config.smoothing);

  const int n = calls->segments.n_segments;
  switch (config.sampler.kind) {
    case SampleOrigin::only_one: calls->samples = sample_only_one(n); break;
    case SampleOrigin::all_but_one: calls->samples = sample_all_but_one(n); break;
    case SampleOrigin::random:
      calls->samples = sample_random(n, config.sampler.n_samples, derive_stream_seed(config.sampler.seed, image.id));
      break;
    case SampleOrigin::entropic: calls->samples = sample_entropic(n, config.sampler.n_samples); break;
  }
  calls->color = resolve_color(config.color, image, options);

  const std::vector<std::uint8_t> everything(n, 1);
  const Image fully = apply_perturbation(image.input, combine(calls->masks, everything), calls->color);

  const PerturbationStream stream(image.input, calls->masks, calls->samples, calls->color);
  const int rows = stream.size();
  const int total = rows + 1;
  const int batch = std::max(1, options.batch_size);
  calls->outputs.reserve(rows);
  for (int begin = 0; begin < total; begin += batch) {
    const int count = std::min(batch, total - begin);
    auto images = stream.batch(begin, std::min(count, rows - begin));
    if (begin + count == total) images.push_back(fully);
    const auto scores = predictor.predict_batch(images);
    if (scores.size() != images.size())
      throw TransportError(TransportError::Kind::malformed, "predictor returned the wrong number of score vectors");
    for (const auto& s : scores) {
      if (target.class_index >= static_cast<int>(s.size()))
        throw TransportError(TransportError::Kind::malformed, "score vector shorter than the target class");
      calls->outputs.push_back(s[target.class_index]);
    }
  }
  calls->reference.unperturbed = target.score;
  calls->reference.fully_perturbed = calls->outputs.back();
  calls->outputs.pop_back();
  return calls;
}

Explanation explain(Predictor& predictor, const LoadedImage& image, const PipelineConfig& config,
                    const RunOptions& options, const Target& target, std::shared_ptr<const ModelCalls> calls) {
  Explanation ex;
  ex.calls = calls ? std::move(calls) : issue_model_calls(predictor, image, config, options, target);
  ex.attribution = attribute(config.attribution, ex.calls->samples, ex.calls->outputs, ex.calls->reference,
                             AttributeOptions{options.ciu_utility});
  if (config.granularity == Granularity::pixel) {
    ex.map = project_per_pixel(ex.attribution.segment_weights, ex.calls->masks, &ex.dropped_pixels);
  } else {
    ex.map = expand_segment_weights(ex.attribution.segment_weights, ex.calls->segments);
  }
  ex.attribution.pixel_map = ex.map;
  return ex;
}

int MatrixResult::failures() const {
  return static_cast<int>(std::count_if(records.begin(), records.end(), [](const RunRecord& r) { return !r.ok; }));
}

namespace {

template <typename KeyFn>
std::vector<AggregateRow> group_means(const std::vector<RunRecord>& records, const std::string& table, KeyFn key_of) {
  std::vector<AggregateRow> rows;
  std::vector<int> ok_counts;
  for (const auto& rec : records) {
    auto key = key_of(rec);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) { return r.key == key; });
    if (it == rows.end()) {
      rows.push_back(AggregateRow{table, std::move(key)});
      ok_counts.push_back(0);
      it = rows.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - rows.begin());
    ++it->n_records;
    if (!rec.ok) {
      ++it->n_failed;
      continue;
    }
    ++ok_counts[idx];
    it->lif_pct += rec.lif;
    it->mif_pct += rec.mif;
    it->srg_pct += rec.srg;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int n = ok_counts[i];
    auto finish = [n](double sum) { return n > 0 ? 100.0 * sum / n : kNaN; };
    rows[i].lif_pct = finish(rows[i].lif_pct);
    rows[i].mif_pct = finish(rows[i].mif_pct);
    rows[i].srg_pct = finish(rows[i].srg_pct);
  }
  return rows;
}

}  // namespace

std::vector<AggregateRow> aggregate_by_config(const std::vector<RunRecord>& records) {
  return group_means(records, "config", [](const RunRecord& r) {
    return std::vector<std::pair<std::string, std::string>>{{"config_hash", r.config_hash}};
  });
}

std::vector<AggregateRow> aggregate_by_sampling(const std::vector<RunRecord>& records) {
  return group_means(records, "sampling", [](const RunRecord& r) {
    return std::vector<std::pair<std::string, std::string>>{
        {"sampler", r.config.sampler.size_label()}, {"attribution", to_string(r.config.attribution)}};
  });
}

std::vector<AggregateRow> aggregate_by_segmentation(const std::vector<RunRecord>& records) {
  return group_means(records, "segmentation", [](const RunRecord& r) {
    return std::vector<std::pair<std::string, std::string>>{
        {"segmentation", r.config.segmenter.label() + "+" + smoothing_label(r.config.smoothing)},
        {"granularity", to_string(r.config.granularity)},
        {"attribution", to_string(r.config.attribution)}};
  });
}

MatrixResult run_matrix(const std::vector<PipelineConfig>& configs, const std::vector<LoadedImage>& images,
                        Predictor& predictor, const RunOptions& options) {
  const auto start = Clock::now();
  const std::string model = predictor.spec().identity;
  const int n_configs = static_cast<int>(configs.size());
  const int n_images = static_cast<int>(images.size());

  std::vector<std::string> hashes;
  std::vector<std::string> call_keys;
  for (const auto& c : configs) {
    hashes.push_back(config_hash(c));
    call_keys.push_back(model_call_key(c));
  }

  MatrixResult result;
  result.records.resize(static_cast<std::size_t>(n_configs) * n_images);
  std::atomic<std::uint64_t> call_sets{0};

  const bool parallel = predictor.thread_safe() && n_images > 1;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n_images; ++i) {
    const LoadedImage& image = images[i];
    std::optional<Target> target;
    std::string target_error;
    try {
      target = resolve_target(predictor, image, options);
    } catch (const std::exception& e) {
      target_error = e.what();
    }

    struct CacheEntry {
      std::shared_ptr<const ModelCalls> calls;
      std::string error;
    };
    std::map<std::string, CacheEntry> cache;

    for (int c = 0; c < n_configs; ++c) {
      RunRecord& rec = result.records[static_cast<std::size_t>(c) * n_images + i];
      rec.config_hash = hashes[c];
      rec.image_id = image.id;
      rec.model = model;
      rec.config = configs[c];
      rec.lif = rec.mif = rec.srg = kNaN;
      const auto t0 = Clock::now();
      try {
        if (!target) throw std::runtime_error(target_error);
        rec.target_class = target->class_index;
        auto it = cache.find(call_keys[c]);
        if (it == cache.end()) {
          CacheEntry entry;
          try {
            entry.calls = issue_model_calls(predictor, image, configs[c], options, *target);
            ++call_sets;
          } catch (const std::exception& e) {
            entry.error = e.what();
          }
          it = cache.emplace(call_keys[c], std::move(entry)).first;
        }
        if (!it->second.calls) throw std::runtime_error(it->second.error);
        rec.n_samples = it->second.calls->samples.n_samples;

        const auto ex = explain(predictor, image, configs[c], options, *target, it->second.calls);
        const auto occlusion = resolve_color(configs[c].occlusion, image, options);
        const auto score = srg(predictor, image.input, ex.map, target->class_index, configs[c].steps, occlusion);
        rec.lif = score.lif;
        rec.mif = score.mif;
        rec.srg = score.srg;
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
        rec.lif = rec.mif = rec.srg = kNaN;
      }
      rec.wall_seconds = seconds_since(t0);
    }
  }

  result.model_call_sets = call_sets;
  for (auto rows : {aggregate_by_config(result.records), aggregate_by_sampling(result.records),
                    aggregate_by_segmentation(result.records)})
    result.aggregates.insert(result.aggregates.end(), rows.begin(), rows.end());
  result.wall_seconds = seconds_since(start);
  return result;
}

namespace {

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string csv_number(double v) { return std::isfinite(v) ? fmt::format("{}", v) : std::string(); }

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_field(cells[i]);
  out << '\n';
}

}  // namespace

const std::vector<std::string> kRecordColumns = {
    "config_hash", "image_id", "model",     "segmenter",    "smoothing", "sampler", "attribution",
    "granularity", "color",    "steps",     "occlusion",    "target_class", "n_samples", "lif",
    "mif",         "srg",      "status",    "error"};

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  write_row(out, kRecordColumns);
  for (const auto& r : records) {
    write_row(out, {r.config_hash, r.image_id, r.model, r.config.segmenter.label(),
                    smoothing_label(r.config.smoothing), r.config.sampler.label(), to_string(r.config.attribution),
                    to_string(r.config.granularity), r.config.color.label(), std::to_string(r.config.steps),
                    r.config.occlusion.label(), r.target_class >= 0 ? std::to_string(r.target_class) : "",
                    std::to_string(r.n_samples), csv_number(r.lif), csv_number(r.mif), csv_number(r.srg),
                    r.ok ? "ok" : "failed", r.error});
  }
}

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  const std::vector<std::string> keys = {"config_hash", "sampler", "segmentation", "granularity", "attribution"};
  std::vector<std::string> header = {"table"};
  header.insert(header.end(), keys.begin(), keys.end());
  for (const char* h : {"n_records", "n_failed", "lif_pct", "mif_pct", "srg_pct"}) header.emplace_back(h);
  write_row(out, header);
  for (const auto& row : rows) {
    std::vector<std::string> cells = {row.table};
    for (const auto& k : keys) {
      auto it = std::find_if(row.key.begin(), row.key.end(), [&](const auto& kv) { return kv.first == k; });
      cells.push_back(it == row.key.end() ? "" : it->second);
    }
    cells.push_back(std::to_string(row.n_records));
    cells.push_back(std::to_string(row.n_failed));
    cells.push_back(csv_number(row.lif_pct));
    cells.push_back(csv_number(row.mif_pct));
    cells.push_back(csv_number(row.srg_pct));
    write_row(out, cells);
  }
}

Json sidecar_json(const MatrixResult& result, const ExperimentConfig& config, const PredictorSpec& spec) {
  Json pipelines = Json::array();
  for (const auto& p : config.matrix.pipelines)
    pipelines.push_back({{"config_hash", config_hash(p)}, {"config", to_json(p)}});

  Json records = Json::array();
  for (const auto& r : result.records)
    records.push_back({{"config_hash", r.config_hash},
                       {"image_id", r.image_id},
                       {"status", r.ok ? "ok" : "failed"},
                       {"wall_seconds", r.wall_seconds}});

  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

  return {{"config", config.document},
          {"pipelines", pipelines},
          {"pruned_combinations", config.matrix.pruned},
          {"model", spec_to_json(spec)},
          {"record_columns", kRecordColumns},
          {"records", records},
          {"model_call_sets", result.model_call_sets},
          {"failures", result.failures()},
          {"wall_seconds", result.wall_seconds},
          {"environment",
           {{"compiler", __VERSION__},
            {"cplusplus", __cplusplus},
            {"openmp_max_threads", omp_get_max_threads()},
            {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
            {"rng", std::string(CounterRng::kName)},
            {"protocol", kProtocolVersion},
            {"gaussian_kernel", {{"radius", "ceil(3*sigma)"}, {"border", "symmetric reflect"}, {"normalized", true}}},
            {"bilinear", "cell centers on pixel centers, edges clamp"},
            {"created_utc", stamp}}}};
}

}  // namespace perturbx::harness

#include "perturbx/harness/config.hpp"

#include <sstream>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/sampling.hpp"

namespace perturbx::harness {

namespace {

const std::vector<std::string> kPipelineFields = {"segmenter", "smoothing",   "sampler", "attribution",
                                                  "granularity", "color", "steps", "occlusion"};

template <typename T>
T get_or(const Json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw InvalidArgument(fmt::format("field '{}': {}", name, e.what()));
  }
}

std::string fmt_number(double v) { return fmt::format("{}", v); }

}  // namespace

std::string SegmenterConfig::label() const {
  if (kind == Kind::grid) return fmt::format("grid:{}x{}", rows, cols);
  return fmt::format("slic:{}:{}:{}", n_segments, fmt_number(compactness), max_iter);
}

std::string SamplerConfig::label() const {
  switch (kind) {
    case SampleOrigin::only_one:
    case SampleOrigin::all_but_one:
      return to_string(kind);
    case SampleOrigin::random:
      return fmt::format("random:{}:seed={}", n_samples, seed);
    case SampleOrigin::entropic:
      return fmt::format("entropic:{}", n_samples);
  }
  return "?";
}

std::string SamplerConfig::size_label() const {
  if (kind == SampleOrigin::random || kind == SampleOrigin::entropic)
    return fmt::format("{}:{}", to_string(kind), n_samples);
  return to_string(kind);
}

const char* to_string(Granularity granularity) {
  return granularity == Granularity::segment ? "segment" : "pixel";
}

std::string ColorPolicy::label() const {
  switch (kind) {
    case Kind::dataset_mean: return "dataset_mean";
    case Kind::image_mean: return "image_mean";
    case Kind::explicit_values: {
      std::string out;
      for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + fmt_number(values[i]);
      return out;
    }
  }
  return "?";
}

std::string smoothing_label(const SmoothingConfig& c) {
  switch (c.method) {
    case SmoothingMethod::none: return "none";
    case SmoothingMethod::bilinear_upsample: return "bilinear";
    case SmoothingMethod::gaussian_filter: return "gaussian:" + fmt_number(c.sigma);
  }
  return "?";
}

Json to_json(const SegmenterConfig& c) {
  if (c.kind == SegmenterConfig::Kind::grid) return {{"kind", "grid"}, {"rows", c.rows}, {"cols", c.cols}};
  return {{"kind", "slic"}, {"n_segments", c.n_segments}, {"compactness", c.compactness}, {"max_iter", c.max_iter}};
}

Json to_json(const SamplerConfig& c) {
  Json j = {{"kind", to_string(c.kind)}};
  if (c.kind == SampleOrigin::random || c.kind == SampleOrigin::entropic) j["n_samples"] = c.n_samples;
  if (c.kind == SampleOrigin::random) j["seed"] = c.seed;
  return j;
}

Json to_json(const ColorPolicy& c) {
  if (c.kind == ColorPolicy::Kind::explicit_values) return c.values;
  return c.label();
}

Json to_json(const PipelineConfig& c) {
  return {{"segmenter", to_json(c.segmenter)},
          {"smoothing", perturbx::to_json(c.smoothing)},
          {"sampler", to_json(c.sampler)},
          {"attribution", perturbx::to_string(c.attribution)},
          {"granularity", to_string(c.granularity)},
          {"color", to_json(c.color)},
          {"steps", c.steps},
          {"occlusion", to_json(c.occlusion)}};
}

SegmenterConfig segmenter_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("segmenter must be an object");
  SegmenterConfig c;
  const auto kind = get_or<std::string>(j, "kind", "");
  if (kind == "grid") {
    c.kind = SegmenterConfig::Kind::grid;
    c.rows = get_or(j, "rows", 7);
    c.cols = get_or(j, "cols", 7);
    if (c.rows < 1 || c.cols < 1) throw InvalidArgument("grid rows and cols must be positive");
  } else if (kind == "slic") {
    c.kind = SegmenterConfig::Kind::slic;
    c.n_segments = get_or(j, "n_segments", 49);
    c.compactness = get_or(j, "compactness", 10.0);
    c.max_iter = get_or(j, "max_iter", 10);
    if (c.n_segments < 2) throw InvalidArgument("slic n_segments must be at least 2");
  } else {
    throw InvalidArgument(fmt::format("unknown segmenter kind '{}'", kind));
  }
  return c;
}

SamplerConfig sampler_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("sampler must be an object");
  SamplerConfig c;
  c.kind = sample_origin_from_string(get_or<std::string>(j, "kind", ""));
  if (c.kind == SampleOrigin::random || c.kind == SampleOrigin::entropic) {
    c.n_samples = get_or(j, "n_samples", 0);
    if (c.n_samples < (c.kind == SampleOrigin::entropic ? 2 : 1))
      throw InvalidArgument(fmt::format("{} sampler needs n_samples", to_string(c.kind)));
  }
  if (c.kind == SampleOrigin::random) c.seed = get_or<std::uint64_t>(j, "seed", 0);
  return c;
}

ColorPolicy color_policy_from_json(const Json& j) {
  ColorPolicy c;
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "dataset_mean") {
      c.kind = ColorPolicy::Kind::dataset_mean;
    } else if (name == "image_mean") {
      c.kind = ColorPolicy::Kind::image_mean;
    } else {
      throw InvalidArgument(fmt::format("unknown color policy '{}'", name));
    }
  } else if (j.is_array() && !j.empty()) {
    c.kind = ColorPolicy::Kind::explicit_values;
    for (const auto& v : j) {
      if (!v.is_number()) throw InvalidArgument("explicit colors must be numbers");
      c.values.push_back(v.get<float>());
    }
  } else {
    throw InvalidArgument("color must be a policy name or a list of channel values");
  }
  return c;
}

PipelineConfig pipeline_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("pipeline must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find(kPipelineFields.begin(), kPipelineFields.end(), key) == kPipelineFields.end())
      throw InvalidArgument(fmt::format("unknown pipeline field '{}'", key));

  PipelineConfig c;
  if (j.contains("segmenter")) c.segmenter = segmenter_from_json(j.at("segmenter"));
  if (j.contains("smoothing")) c.smoothing = smoothing_config_from_json(j.at("smoothing"));
  if (!j.contains("sampler")) throw InvalidArgument("pipeline needs a sampler");
  c.sampler = sampler_from_json(j.at("sampler"));
  if (j.contains("attribution")) c.attribution = attribution_method_from_string(j.at("attribution").get<std::string>());
  if (j.contains("granularity")) {
    const auto g = j.at("granularity").get<std::string>();
    if (g == "segment") {
      c.granularity = Granularity::segment;
    } else if (g == "pixel") {
      c.granularity = Granularity::pixel;
    } else {
      throw InvalidArgument(fmt::format("unknown granularity '{}'", g));
    }
  }
  if (j.contains("color")) c.color = color_policy_from_json(j.at("color"));
  if (j.contains("occlusion")) c.occlusion = color_policy_from_json(j.at("occlusion"));
  c.steps = get_or(j, "steps", 10);
  if (c.steps < 2) throw InvalidArgument("steps must be at least 2");

  if (c.attribution == AttributionMethod::CIU && c.sampler.kind != SampleOrigin::only_one &&
      c.sampler.kind != SampleOrigin::all_but_one)
    throw InvalidArgument("CIU requires only_one or all_but_one sampling");
  if (c.smoothing.method == SmoothingMethod::bilinear_upsample) {
    if (c.segmenter.kind != SegmenterConfig::Kind::grid)
      throw InvalidArgument("bilinear smoothing requires a grid segmenter");
    const GridShape grid{c.segmenter.rows, c.segmenter.cols};
    const bool given = j.at("smoothing").contains("grid_shape");
    if (given && c.smoothing.grid_shape != grid)
      throw InvalidArgument("bilinear grid_shape must match the segmenter grid");
    c.smoothing.grid_shape = grid;
  }
  if (auto problems = validate(c.smoothing); !problems.empty()) throw InvalidArgument(problems.front());
  return c;
}

std::string config_hash(const PipelineConfig& c) {
  return fmt::format("{:016x}", fnv1a64(to_json(c).dump()));
}

std::string model_call_key(const PipelineConfig& c) {
  return Json{{"segmenter", to_json(c.segmenter)},
              {"smoothing", perturbx::to_json(c.smoothing)},
              {"sampler", to_json(c.sampler)},
              {"color", to_json(c.color)}}
      .dump();
}

namespace {

bool is_alternatives(const std::string& field, const Json& value) {
  if (!value.is_array()) return false;
  if (field == "color" || field == "occlusion")
    return !value.empty() && !value.front().is_number();
  return true;
}

}  // namespace

MatrixExpansion expand_matrix(const Json& section) {
  if (!section.is_object()) throw InvalidArgument("pipeline section must be an object");
  std::vector<Json> partial = {Json::object()};
  for (const auto& field : kPipelineFields) {
    if (!section.contains(field)) continue;
    const Json& value = section.at(field);
    std::vector<Json> options;
    if (is_alternatives(field, value)) {
      if (value.empty()) throw InvalidArgument(fmt::format("'{}' lists no alternatives", field));
      options.assign(value.begin(), value.end());
    } else {
      options.push_back(value);
    }
    std::vector<Json> next;
    next.reserve(partial.size() * options.size());
    for (const auto& base : partial)
      for (const auto& option : options) {
        Json j = base;
        j[field] = option;
        next.push_back(std::move(j));
      }
    partial = std::move(next);
  }
  for (const auto& [key, value] : section.items())
    if (std::find(kPipelineFields.begin(), kPipelineFields.end(), key) == kPipelineFields.end())
      throw InvalidArgument(fmt::format("unknown pipeline field '{}'", key));

  MatrixExpansion out;
  for (const auto& j : partial) {
    try {
      out.pipelines.push_back(pipeline_from_json(j));
    } catch (const InvalidArgument& e) {
      const std::string what = e.what();
      if (partial.size() > 1 && (what.find("CIU requires") == 0 || what.find("bilinear smoothing requires") == 0)) {
        ++out.pruned;
      } else {
        throw;
      }
    }
  }
  if (out.pipelines.empty()) throw InvalidArgument("pipeline matrix expands to no valid pipeline");
  return out;
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

int to_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw InvalidArgument("");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(fmt::format("'{}' is not an integer", s));
  }
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InvalidArgument("");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(fmt::format("'{}' is not a number", s));
  }
}

std::uint64_t to_u64(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size() || s.front() == '-') throw InvalidArgument("");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(fmt::format("'{}' is not a seed", s));
  }
}

Json parse_single_flag(const std::string& field, const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.empty()) throw InvalidArgument(fmt::format("empty value for --{}", field));
  const auto& head = parts[0];
  if (field == "segmenter") {
    if (head == "grid") {
      const auto dims = parts.size() > 1 ? split(parts[1], 'x') : std::vector<std::string>{"7", "7"};
      if (dims.size() != 2) throw InvalidArgument("grid segmenter expects grid:ROWSxCOLS");
      return {{"kind", "grid"}, {"rows", to_int(dims[0])}, {"cols", to_int(dims[1])}};
    }
    if (head == "slic") {
      Json j = {{"kind", "slic"}, {"n_segments", parts.size() > 1 ? to_int(parts[1]) : 49}};
      if (parts.size() > 2) j["compactness"] = to_double(parts[2]);
      if (parts.size() > 3) j["max_iter"] = to_int(parts[3]);
      return j;
    }
  } else if (field == "smoothing") {
    if (head == "none") return {{"method", "none"}};
    if (head == "bilinear" || head == "bilinear_upsample") return {{"method", "bilinear_upsample"}};
    if (head == "gaussian" || head == "gaussian_filter")
      return {{"method", "gaussian_filter"}, {"sigma", parts.size() > 1 ? to_double(parts[1]) : 10.0}};
  } else if (field == "sampler") {
    if (head == "only_one" || head == "all_but_one") return {{"kind", head}};
    if (head == "random") {
      if (parts.size() < 2) throw InvalidArgument("random sampler expects random:N[:SEED]");
      return {{"kind", "random"},
              {"n_samples", to_int(parts[1])},
              {"seed", parts.size() > 2 ? to_u64(parts[2]) : 0ULL}};
    }
    if (head == "entropic") {
      if (parts.size() < 2) throw InvalidArgument("entropic sampler expects entropic:N");
      return {{"kind", "entropic"}, {"n_samples", to_int(parts[1])}};
    }
  } else if (field == "attribution" || field == "granularity") {
    return text;
  } else if (field == "steps") {
    return to_int(text);
  } else if (field == "color" || field == "occlusion") {
    if (text == "dataset_mean" || text == "image_mean") return text;
    Json values = Json::array();
    for (const auto& v : split(text, ',')) values.push_back(to_double(v));
    return values;
  } else {
    throw InvalidArgument(fmt::format("unknown pipeline field '{}'", field));
  }
  throw InvalidArgument(fmt::format("cannot parse --{} value '{}'", field, text));
}

}  // namespace

Json parse_flag_value(const std::string& field, const std::string& text) {
  // Several alternatives may be separated by ';' and become a matrix list.
  const auto alternatives = split(text, ';');
  if (alternatives.size() == 1) return parse_single_flag(field, text);
  Json list = Json::array();
  for (const auto& a : alternatives) list.push_back(parse_single_flag(field, a));
  return list;
}

ModelSource model_source_from_json(const Json& j) {
  ModelSource m;
  if (j.is_string()) {
    const auto text = j.get<std::string>();
    const auto parts = split(text, ':');
    if (!parts.empty() && (parts[0] == "additive" || parts[0] == "logistic")) {
      Json spec = {{"synthetic", parts[0]}};
      if (parts.size() > 1) spec["seed"] = to_u64(parts[1]);
      if (parts.size() > 2) spec["n_classes"] = to_int(parts[2]);
      return model_source_from_json(spec);
    }
    m.kind = ModelSource::Kind::endpoint;
    m.endpoint = text;
    return m;
  }
  if (!j.is_object()) throw InvalidArgument("model must be an endpoint string or an object");
  if (j.contains("endpoint")) {
    m.kind = ModelSource::Kind::endpoint;
    m.endpoint = j.at("endpoint").get<std::string>();
    return m;
  }
  const auto kind = get_or<std::string>(j, "synthetic", "");
  if (kind == "additive") {
    m.kind = ModelSource::Kind::additive;
    m.n_classes = get_or(j, "n_classes", 1);
  } else if (kind == "logistic") {
    m.kind = ModelSource::Kind::logistic;
    m.n_classes = get_or(j, "n_classes", 2);
    m.gain = get_or(j, "gain", 1.0);
    m.offset = get_or(j, "offset", 0.0);
  } else {
    throw InvalidArgument(fmt::format("unknown synthetic model '{}'", kind));
  }
  m.seed = get_or<std::uint64_t>(j, "seed", 0);
  return m;
}

ExperimentConfig experiment_from_json(Json document, const std::vector<std::pair<std::string, Json>>& overrides) {
  if (!document.is_object()) throw InvalidArgument("experiment config must be a JSON object");
  if (!document.contains("pipeline")) document["pipeline"] = Json::object();
  for (const auto& [field, value] : overrides) document["pipeline"][field] = value;

  ExperimentConfig cfg;
  cfg.matrix = expand_matrix(document.at("pipeline"));

  if (document.contains("images")) {
    for (const auto& entry : document.at("images")) {
      ImageSource src;
      src.id = get_or<std::string>(entry, "id", "");
      if (entry.contains("path")) src.path = entry.at("path").get<std::string>();
      if (entry.contains("synthetic")) {
        const auto& s = entry.at("synthetic");
        ImageSource::Synthetic syn;
        syn.height = get_or(s, "height", 64);
        syn.width = get_or(s, "width", 64);
        syn.channels = get_or(s, "channels", 3);
        syn.seed = get_or<std::uint64_t>(s, "seed", 0);
        if (syn.channels != 1 && syn.channels != 3) throw InvalidArgument("synthetic images have 1 or 3 channels");
        src.synthetic = syn;
      }
      if (src.path.empty() && !src.synthetic) throw InvalidArgument("image entry needs a path or a synthetic spec");
      if (src.id.empty()) src.id = src.path.empty() ? fmt::format("synthetic-{}", src.synthetic->seed) : src.path;
      cfg.images.push_back(std::move(src));
    }
  }

  if (document.contains("model")) cfg.model = model_source_from_json(document.at("model"));
  if (document.contains("normalization")) {
    const auto& n = document.at("normalization");
    cfg.normalization = Normalization{n.at("mean").get<std::vector<float>>(), n.at("std").get<std::vector<float>>()};
    if (cfg.normalization->mean.size() != cfg.normalization->std.size())
      throw InvalidArgument("normalization mean and std differ in length");
    for (float s : cfg.normalization->std)
      if (!(s > 0.0f)) throw InvalidArgument("normalization std must be positive");
  }
  if (document.contains("dataset_mean")) cfg.dataset_mean = document.at("dataset_mean").get<std::vector<float>>();
  if (document.contains("target_class")) cfg.target_class = document.at("target_class").get<int>();
  cfg.batch_size = get_or(document, "batch_size", 64);
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  cfg.document = std::move(document);
  return cfg;
}

}  // namespace perturbx::harness

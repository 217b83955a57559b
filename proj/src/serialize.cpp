#include "perturbx/serialize.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "perturbx/error.hpp"

namespace perturbx {

static_assert(std::endian::native == std::endian::little,
              "float32 payloads are written in host order; big-endian hosts need byte swapping");

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  if (bytes.empty()) return out;
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                      static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw InvalidArgument("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int written = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                      static_cast<int>(text.size()));
  if (written < 0) throw InvalidArgument("invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(written) - padding);
  return out;
}

std::string encode_f32(std::span<const float> values) {
  return base64_encode({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
}

std::string encode_f32(std::span<const double> values) {
  std::vector<float> narrow(values.begin(), values.end());
  return encode_f32(std::span<const float>(narrow));
}

std::vector<float> decode_f32(const std::string& text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(float) != 0) throw InvalidArgument("float32 payload has a partial element");
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<double> decode_f32_as_f64(const std::string& text) {
  const auto narrow = decode_f32(text);
  return {narrow.begin(), narrow.end()};
}

namespace {

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw InvalidArgument(fmt::format("missing field '{}'", name));
  return j.at(name);
}

template <typename T>
T get(const Json& j, const char* name) {
  try {
    return field(j, name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(fmt::format("field '{}': {}", name, e.what()));
  }
}

Json grid_json(const GridShape& g) { return Json::array({g.rows, g.cols}); }

GridShape grid_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("grid shape must be [rows, cols]");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

Json to_json(const Image& image) {
  return {{"height", image.height},   {"width", image.width},
          {"channels", image.channels}, {"space", to_string(image.space)},
          {"data", encode_f32(std::span<const float>(image.data))}};
}

Image image_from_json(const Json& j) {
  Image image;
  image.height = get<int>(j, "height");
  image.width = get<int>(j, "width");
  image.channels = get<int>(j, "channels");
  image.space = color_space_from_string(get<std::string>(j, "space"));
  image.data = decode_f32(get<std::string>(j, "data"));
  return image;
}

Json to_json(const SegmentMap& map) {
  Json j = {{"height", map.height}, {"width", map.width}, {"n_segments", map.n_segments},
            {"labels", map.labels}};
  if (map.grid) j["grid"] = grid_json(*map.grid);
  if (map.degenerate_fallback) j["degenerate_fallback"] = true;
  return j;
}

SegmentMap segment_map_from_json(const Json& j) {
  SegmentMap map;
  map.height = get<int>(j, "height");
  map.width = get<int>(j, "width");
  map.n_segments = get<int>(j, "n_segments");
  map.labels = get<std::vector<std::int32_t>>(j, "labels");
  if (j.contains("grid")) map.grid = grid_from(j.at("grid"));
  map.degenerate_fallback = j.value("degenerate_fallback", false);
  return map;
}

Json to_json(const SmoothingConfig& config) {
  Json j = {{"method", to_string(config.method)}};
  if (config.method == SmoothingMethod::gaussian_filter) j["sigma"] = config.sigma;
  if (config.method == SmoothingMethod::bilinear_upsample) j["grid_shape"] = grid_json(config.grid_shape);
  return j;
}

SmoothingConfig smoothing_config_from_json(const Json& j) {
  SmoothingConfig config;
  config.method = smoothing_method_from_string(get<std::string>(j, "method"));
  if (j.contains("sigma")) config.sigma = get<double>(j, "sigma");
  if (j.contains("grid_shape")) config.grid_shape = grid_from(j.at("grid_shape"));
  return config;
}

Json to_json(const SegmentMaskStack& stack) {
  Json j = {{"n_segments", stack.n_segments},
            {"height", stack.height},
            {"width", stack.width},
            {"smoothing", to_json(stack.smoothing)},
            {"masks", encode_f32(std::span<const double>(stack.masks))}};
  if (stack.source_grid) j["source_grid"] = grid_json(*stack.source_grid);
  return j;
}

SegmentMaskStack mask_stack_from_json(const Json& j) {
  SegmentMaskStack stack;
  stack.n_segments = get<int>(j, "n_segments");
  stack.height = get<int>(j, "height");
  stack.width = get<int>(j, "width");
  stack.smoothing = smoothing_config_from_json(field(j, "smoothing"));
  stack.masks = decode_f32_as_f64(get<std::string>(j, "masks"));
  if (j.contains("source_grid")) stack.source_grid = grid_from(j.at("source_grid"));
  return stack;
}

Json to_json(const SampleSet& samples) {
  Json rows = Json::array();
  for (int i = 0; i < samples.n_samples; ++i) {
    auto r = samples.row(i);
    rows.push_back(std::vector<int>(r.begin(), r.end()));
  }
  Json j = {{"n_samples", samples.n_samples},
            {"n_segments", samples.n_segments},
            {"origin", to_string(samples.origin)},
            {"indicators", std::move(rows)}};
  if (samples.seed) j["seed"] = *samples.seed;
  if (samples.truncated) j["truncated"] = true;
  return j;
}

SampleSet sample_set_from_json(const Json& j) {
  SampleSet samples;
  samples.n_samples = get<int>(j, "n_samples");
  samples.n_segments = get<int>(j, "n_segments");
  samples.origin = sample_origin_from_string(get<std::string>(j, "origin"));
  for (const auto& row : field(j, "indicators")) {
    if (!row.is_array()) throw InvalidArgument("indicator rows must be arrays");
    for (const auto& v : row) samples.indicators.push_back(static_cast<std::uint8_t>(v.get<int>()));
  }
  if (j.contains("seed")) samples.seed = get<std::uint64_t>(j, "seed");
  samples.truncated = j.value("truncated", false);
  return samples;
}

Json to_json(const PredictionRecord& record) {
  Json j = {{"sample_index", record.sample_index}, {"output", static_cast<float>(record.output)}};
  if (record.full_scores) j["full_scores"] = encode_f32(std::span<const double>(*record.full_scores));
  return j;
}

PredictionRecord prediction_record_from_json(const Json& j) {
  PredictionRecord record;
  record.sample_index = get<int>(j, "sample_index");
  record.output = get<float>(j, "output");
  if (j.contains("full_scores")) record.full_scores = decode_f32_as_f64(get<std::string>(j, "full_scores"));
  return record;
}

Json to_json(const AttributionResult& result) {
  Json j = {{"method", to_string(result.method)},
            {"reference_output", static_cast<float>(result.reference_output)},
            {"segment_weights", encode_f32(std::span<const double>(result.segment_weights))}};
  if (result.pixel_map) {
    j["pixel_map"] = {{"height", result.pixel_map->height},
                      {"width", result.pixel_map->width},
                      {"data", encode_f32(std::span<const double>(result.pixel_map->values))}};
  }
  if (result.degenerate) j["degenerate"] = true;
  return j;
}

AttributionResult attribution_result_from_json(const Json& j) {
  AttributionResult result;
  result.method = attribution_method_from_string(get<std::string>(j, "method"));
  result.reference_output = get<float>(j, "reference_output");
  result.segment_weights = decode_f32_as_f64(get<std::string>(j, "segment_weights"));
  if (j.contains("pixel_map")) {
    const auto& pm = j.at("pixel_map");
    result.pixel_map = PixelMap{get<int>(pm, "height"), get<int>(pm, "width"),
                                decode_f32_as_f64(get<std::string>(pm, "data"))};
  }
  result.degenerate = j.value("degenerate", false);
  return result;
}

}  // namespace perturbx

#pragma once

// JSON encoding of the core types. Real-valued payloads travel as base64 of
// little-endian float32, row-major, so anything wider than float32 is
// rounded on encode.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "perturbx/types.hpp"

namespace perturbx {

using Json = nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::string encode_f32(std::span<const float> values);
std::string encode_f32(std::span<const double> values);
std::vector<float> decode_f32(const std::string& text);
std::vector<double> decode_f32_as_f64(const std::string& text);

Json to_json(const Image& image);
Json to_json(const SegmentMap& map);
Json to_json(const SmoothingConfig& config);
Json to_json(const SegmentMaskStack& stack);
Json to_json(const SampleSet& samples);
Json to_json(const PredictionRecord& record);
Json to_json(const AttributionResult& result);

// Decoders throw InvalidArgument on missing or mistyped fields. They do not
// run validate(); callers decide whether invariants matter.
Image image_from_json(const Json& j);
SegmentMap segment_map_from_json(const Json& j);
SmoothingConfig smoothing_config_from_json(const Json& j);
SegmentMaskStack mask_stack_from_json(const Json& j);
SampleSet sample_set_from_json(const Json& j);
PredictionRecord prediction_record_from_json(const Json& j);
AttributionResult attribution_result_from_json(const Json& j);

}  // namespace perturbx

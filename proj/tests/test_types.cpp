#include <gtest/gtest.h>

#include <algorithm>

#include "perturbx/error.hpp"
#include "perturbx/masking.hpp"
#include "perturbx/sampling.hpp"
#include "perturbx/segmentation.hpp"
#include "perturbx/serialize.hpp"
#include "perturbx/types.hpp"

using namespace perturbx;

namespace {

bool mentions(const Violations& v, const std::string& text) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(text) != std::string::npos; });
}

Image small_image() {
  Image image{2, 3, 3, {}, ColorSpace::unit_0_1};
  for (int i = 0; i < 18; ++i) image.data.push_back(static_cast<float>(i) / 17.0f);
  return image;
}

}  // namespace

TEST(Validate, LabelEqualToSegmentCountIsOutOfRange) {
  auto map = grid_segment(4, 4, 2, 2);
  map.labels[5] = map.n_segments;
  EXPECT_TRUE(mentions(validate(map), "label out of range"));
}

TEST(Validate, OnlyOneSampleSetWithReferenceRowIsOk) {
  SampleSet set;
  set.n_segments = 3;
  set.n_samples = 4;
  set.origin = SampleOrigin::only_one;
  set.indicators = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_TRUE(validate(set).empty());
}

TEST(Validate, MaskSumAboveOneIsReported) {
  auto stack = indicator_masks(grid_segment(4, 4, 2, 2));
  stack.smoothing = SmoothingConfig{SmoothingMethod::gaussian_filter, 1.0, {}};
  stack.mask(1)[0] = 0.5;  // pixel 0 now sums to 1.5
  EXPECT_TRUE(mentions(validate(stack), "partition sum exceeded"));
}

TEST(Validate, ImageChecks) {
  auto image = small_image();
  EXPECT_TRUE(validate(image).empty());
  image.data[0] = 1.5f;
  EXPECT_TRUE(mentions(validate(image), "outside [0,1]"));
  image.data.pop_back();
  EXPECT_TRUE(mentions(validate(image), "data length"));
}

TEST(Validate, SegmentMapNeedsEverySegmentPresent) {
  auto map = grid_segment(4, 4, 2, 2);
  for (auto& l : map.labels)
    if (l == 3) l = 2;
  EXPECT_TRUE(mentions(validate(map), "segment 3 has no pixels"));
}

TEST(Validate, UnsmoothedMaskMustBeIndicator) {
  auto stack = indicator_masks(grid_segment(4, 4, 2, 2));
  EXPECT_TRUE(validate(stack).empty());
  stack.mask(0)[0] = 0.5;
  EXPECT_TRUE(mentions(validate(stack), "0/1 indicator"));
}

TEST(Validate, SmoothingConfigSigma) {
  EXPECT_FALSE(validate(SmoothingConfig{SmoothingMethod::gaussian_filter, 0.0, {}}).empty());
  EXPECT_TRUE(validate(SmoothingConfig{SmoothingMethod::gaussian_filter, 10.0, {}}).empty());
}

TEST(Validate, PredictionRecordsDense) {
  std::vector<PredictionRecord> records = {{0, 1.0, {}}, {2, 0.5, {}}};
  EXPECT_FALSE(validate(std::span<const PredictionRecord>(records)).empty());
  records[1].sample_index = 1;
  EXPECT_TRUE(validate(std::span<const PredictionRecord>(records)).empty());
}

TEST(Validate, AttributionResultLengths) {
  AttributionResult r;
  r.segment_weights = {1, 2, 3};
  EXPECT_TRUE(validate(r, 3).empty());
  EXPECT_FALSE(validate(r, 4).empty());
  r.pixel_map = PixelMap{2, 2, {0, 0, 0, 0}};
  EXPECT_FALSE(validate(r, 3, GridShape{3, 2}).empty());
  EXPECT_TRUE(validate(r, 3, GridShape{2, 2}).empty());
}

TEST(EnumNames, RoundTrip) {
  for (auto m : {AttributionMethod::CIU, AttributionMethod::PDA, AttributionMethod::LIME, AttributionMethod::SHAP,
                 AttributionMethod::RISE})
    EXPECT_EQ(attribution_method_from_string(to_string(m)), m);
  for (auto o : {SampleOrigin::only_one, SampleOrigin::all_but_one, SampleOrigin::random, SampleOrigin::entropic})
    EXPECT_EQ(sample_origin_from_string(to_string(o)), o);
  EXPECT_THROW(attribution_method_from_string("GradCAM"), InvalidArgument);
}

// --- serialization ---

TEST(Base64, KnownVectors) {
  const std::string text = "any carnal pleas";
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  EXPECT_EQ(base64_encode(bytes), "YW55IGNhcm5hbCBwbGVhcw==");
  EXPECT_EQ(base64_decode("YW55IGNhcm5hbCBwbGVhcw=="), bytes);
  EXPECT_EQ(base64_decode(""), std::vector<std::uint8_t>{});
  EXPECT_THROW(base64_decode("abc"), InvalidArgument);
}

TEST(Base64, Float32LittleEndian) {
  const std::vector<float> values{1.0f, -2.5f};
  // 1.0f = 00 00 80 3f, -2.5f = 00 00 20 c0
  EXPECT_EQ(encode_f32(std::span<const float>(values)), "AACAPwAAIMA=");
  EXPECT_EQ(decode_f32("AACAPwAAIMA="), values);
}

TEST(Serialize, ImageRoundTrip) {
  const auto image = small_image();
  const auto back = image_from_json(Json::parse(to_json(image).dump()));
  EXPECT_EQ(back.height, image.height);
  EXPECT_EQ(back.width, image.width);
  EXPECT_EQ(back.channels, image.channels);
  EXPECT_EQ(back.space, image.space);
  EXPECT_EQ(back.data, image.data);
}

TEST(Serialize, SegmentMapRoundTrip) {
  const auto map = grid_segment(5, 7, 2, 3);
  const auto back = segment_map_from_json(Json::parse(to_json(map).dump()));
  EXPECT_EQ(back.labels, map.labels);
  EXPECT_EQ(back.n_segments, map.n_segments);
  EXPECT_EQ(back.grid, map.grid);
  EXPECT_EQ(back.degenerate_fallback, map.degenerate_fallback);
}

TEST(Serialize, MaskStackRoundTripIsFloat32Exact) {
  const auto stack = build_masks(grid_segment(12, 12, 3, 3), SmoothingConfig{SmoothingMethod::gaussian_filter, 2.0, {}});
  const auto back = mask_stack_from_json(Json::parse(to_json(stack).dump()));
  ASSERT_EQ(back.masks.size(), stack.masks.size());
  for (std::size_t i = 0; i < stack.masks.size(); ++i)
    EXPECT_EQ(back.masks[i], static_cast<double>(static_cast<float>(stack.masks[i])));
  EXPECT_EQ(back.smoothing.method, SmoothingMethod::gaussian_filter);
  EXPECT_EQ(back.smoothing.sigma, 2.0);
  // A second trip is exact.
  EXPECT_EQ(mask_stack_from_json(to_json(back)).masks, back.masks);
}

TEST(Serialize, SampleSetRoundTrip) {
  auto set = sample_random(5, 7, 99);
  const auto back = sample_set_from_json(Json::parse(to_json(set).dump()));
  EXPECT_EQ(back.indicators, set.indicators);
  EXPECT_EQ(back.origin, set.origin);
  EXPECT_EQ(back.seed, set.seed);
  EXPECT_EQ(back.n_samples, 7);
  const auto ent = sample_entropic(2, 9);
  EXPECT_TRUE(sample_set_from_json(to_json(ent)).truncated);
}

TEST(Serialize, PredictionRecordAndAttributionRoundTrip) {
  PredictionRecord rec{3, 0.25, std::vector<double>{0.25, 0.75}};
  const auto rb = prediction_record_from_json(Json::parse(to_json(rec).dump()));
  EXPECT_EQ(rb.sample_index, 3);
  EXPECT_EQ(rb.output, 0.25);
  EXPECT_EQ(rb.full_scores, rec.full_scores);

  AttributionResult res;
  res.segment_weights = {0.5, -0.25};
  res.pixel_map = PixelMap{1, 2, {0.5, -0.25}};
  res.method = AttributionMethod::SHAP;
  res.reference_output = 1.0;
  res.degenerate = true;
  const auto ab = attribution_result_from_json(Json::parse(to_json(res).dump()));
  EXPECT_EQ(ab.segment_weights, res.segment_weights);
  ASSERT_TRUE(ab.pixel_map);
  EXPECT_EQ(ab.pixel_map->values, res.pixel_map->values);
  EXPECT_EQ(ab.method, AttributionMethod::SHAP);
  EXPECT_EQ(ab.reference_output, 1.0);
  EXPECT_TRUE(ab.degenerate);
}

TEST(Serialize, RejectsMissingFields) {
  EXPECT_THROW(image_from_json(Json{{"height", 1}}), InvalidArgument);
  EXPECT_THROW(sample_set_from_json(Json::object()), InvalidArgument);
}

TEST(SerializeProperty, RandomSampleSetsRoundTrip) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int n = 1 + static_cast<int>(seed % 17);
    const auto set = sample_random(n, 1 + static_cast<int>(seed % 9), seed);
    EXPECT_EQ(sample_set_from_json(to_json(set)).indicators, set.indicators) << seed;
  }
}

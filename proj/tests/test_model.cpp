#include <gtest/gtest.h>

#include <numeric>

#include "perturbx/error.hpp"
#include "perturbx/harness/runner.hpp"
#include "perturbx/model.hpp"
#include "perturbx/perturbation.hpp"
#include "perturbx/segmentation.hpp"

using namespace perturbx;

namespace {

Image zeros(int h, int w, int c) {
  return Image{h, w, c, std::vector<float>(static_cast<std::size_t>(h) * w * c, 0.0f),
               ColorSpace::normalized_zero_mean};
}

}  // namespace

TEST(AdditiveModel, EmptyBatch) {
  auto model = make_additive_model(random_coefficients(4, 4, 1), 0, 3);
  EXPECT_TRUE(model.predict_batch({}).empty());
}

TEST(AdditiveModel, ZeroImageScoresZero) {
  auto model = make_additive_model(random_coefficients(8, 8, 2), 1, 3);
  const std::vector<Image> batch{zeros(8, 8, 3)};
  const auto scores = model.predict_batch(batch);
  ASSERT_EQ(scores.size(), 1u);
  EXPECT_EQ(scores[0], (ScoreVector{0.0, 0.0, 0.0}));
}

TEST(AdditiveModel, CopiesGiveIdenticalVectors) {
  auto model = make_additive_model(random_coefficients(8, 8, 3), 0, 2);
  const auto image = harness::synthetic_image(8, 8, 3, 9);
  const std::vector<Image> batch(5, image);
  const auto scores = model.predict_batch(batch);
  for (const auto& s : scores) EXPECT_EQ(s, scores[0]);
}

TEST(AdditiveModel, ScoreIsCoefficientDotChannelMean) {
  const auto coeff = random_coefficients(5, 6, 4);
  auto model = make_additive_model(coeff, 0, 1);
  const auto image = harness::synthetic_image(5, 6, 3, 2);
  double expected = 0.0;
  for (int p = 0; p < 30; ++p)
    expected += coeff.values[p] * (double(image.data[p * 3]) + image.data[p * 3 + 1] + image.data[p * 3 + 2]) / 3.0;
  EXPECT_NEAR(model.score(image), expected, 1e-12);
}

TEST(AdditiveModel, QuadrantGroundTruthRanksQuadrantFirst) {
  PixelMap coeff{8, 8, std::vector<double>(64, 0.0)};
  for (int r = 0; r < 4; ++r)
    for (int c = 4; c < 8; ++c) coeff.values[r * 8 + c] = 1.0;
  auto model = make_additive_model(coeff, 0, 1);
  const auto image = harness::synthetic_image(8, 8, 3, 5);
  const auto segments = grid_segment(8, 8, 4, 4);
  const auto contrib = model.segment_contributions(image, segments, std::vector<float>{0, 0, 0});
  // Segments 2, 3, 6, 7 cover the top-right quadrant.
  std::vector<int> order(16);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return contrib[a] > contrib[b]; });
  std::vector<int> top(order.begin(), order.begin() + 4);
  std::sort(top.begin(), top.end());
  EXPECT_EQ(top, (std::vector<int>{2, 3, 6, 7}));
  for (int s : {0, 1, 4, 5, 8, 9, 10, 11, 12, 13, 14, 15}) EXPECT_EQ(contrib[s], 0.0);
}

TEST(AdditiveModel, ContributionsMatchScoreDifferences) {
  auto model = make_additive_model(random_coefficients(12, 12, 6), 0, 1);
  const auto image = harness::synthetic_image(12, 12, 3, 6);
  const auto segments = grid_segment(12, 12, 3, 3);
  const std::vector<float> color{0.2f, 0.5f, 0.7f};
  const auto contrib = model.segment_contributions(image, segments, color);
  for (int s = 0; s < 9; ++s) {
    Image replaced = image;
    for (int p = 0; p < 144; ++p)
      if (segments.labels[p] == s)
        for (int ch = 0; ch < 3; ++ch) replaced.data[p * 3 + ch] = color[ch];
    EXPECT_NEAR(contrib[s], model.score(image) - model.score(replaced), 1e-12) << s;
  }
  const auto pixels = model.pixel_contributions(image, color);
  EXPECT_NEAR(std::accumulate(pixels.values.begin(), pixels.values.end(), 0.0),
              std::accumulate(contrib.begin(), contrib.end(), 0.0), 1e-12);
}

TEST(AdditiveModel, ZeroCoefficientsAreConstant) {
  auto model = make_additive_model(PixelMap{4, 4, std::vector<double>(16, 0.0)}, 0, 1);
  const std::vector<Image> batch{harness::synthetic_image(4, 4, 3, 1), harness::synthetic_image(4, 4, 3, 2)};
  const auto scores = model.predict_batch(batch);
  EXPECT_EQ(scores[0], scores[1]);
}

TEST(AdditiveModel, RejectsMismatchedImages) {
  auto model = make_additive_model(random_coefficients(4, 4, 1), 0, 1);
  const std::vector<Image> batch{zeros(4, 5, 3)};
  EXPECT_THROW(model.predict_batch(batch), InvalidArgument);
  const std::vector<Image> gray{zeros(4, 4, 1)};
  EXPECT_THROW(model.predict_batch(gray), InvalidArgument);
}

TEST(RandomCoefficients, SeededAndInRange) {
  const auto a = random_coefficients(6, 7, 11), b = random_coefficients(6, 7, 11);
  EXPECT_EQ(a.values, b.values);
  for (double v : a.values) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_NE(random_coefficients(6, 7, 12).values, a.values);
}

TEST(LogisticModel, ProbabilitiesSumToOne) {
  LogisticModel model(random_coefficients(6, 6, 3), 1, 4, 3, 2.0, 0.1);
  EXPECT_EQ(model.spec().output_semantics, OutputSemantics::probabilities);
  const std::vector<Image> batch{harness::synthetic_image(6, 6, 3, 1), zeros(6, 6, 3)};
  for (const auto& s : model.predict_batch(batch)) {
    EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-12);
    for (double v : s) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
  const auto zero_scores = model.predict_batch(std::vector<Image>{zeros(6, 6, 3)});
  EXPECT_NEAR(zero_scores[0][1], 1.0 / (1.0 + std::exp(2.0 * 0.1)), 1e-12);
}

TEST(CountingPredictor, CountsCallsAndImages) {
  auto model = make_additive_model(random_coefficients(4, 4, 1), 0, 1);
  CountingPredictor counting(model);
  const std::vector<Image> batch(7, zeros(4, 4, 3));
  const auto scores = predict_in_batches(counting, batch, 3);
  EXPECT_EQ(scores.size(), 7u);
  EXPECT_EQ(counting.calls(), 3u);
  EXPECT_EQ(counting.images(), 7u);
  EXPECT_TRUE(counting.thread_safe());
}

TEST(TopClass, FirstOnTies) {
  EXPECT_EQ(top_class({0.1, 0.5, 0.5}), 1);
  EXPECT_EQ(top_class({2.0}), 0);
}

TEST(PredictorSpec, Validation) {
  PredictorSpec spec{224, 224, 3, 1000, OutputSemantics::probabilities, "x", 0.0};
  EXPECT_TRUE(validate(spec).empty());
  spec.n_classes = 0;
  EXPECT_FALSE(validate(spec).empty());
  EXPECT_EQ(output_semantics_from_string("logits"), OutputSemantics::logits);
  EXPECT_THROW(output_semantics_from_string("odds"), InvalidArgument);
}

#include <gtest/gtest.h>

#include "perturbx/error.hpp"
#include "perturbx/harness/runner.hpp"
#include "perturbx/kernels.hpp"
#include "perturbx/masking.hpp"
#include "perturbx/perturbation.hpp"
#include "perturbx/sampling.hpp"
#include "perturbx/segmentation.hpp"

using namespace perturbx;

namespace {

Image ramp(int h, int w, int channels, ColorSpace space = ColorSpace::unit_0_1) {
  Image image{h, w, channels, std::vector<float>(static_cast<std::size_t>(h) * w * channels), space};
  for (std::size_t i = 0; i < image.data.size(); ++i) image.data[i] = static_cast<float>((i * 37 % 101) / 100.0);
  return image;
}

}  // namespace

TEST(ApplyPerturbation, ZeroMapIsIdentity) {
  const auto image = ramp(5, 4, 3);
  const std::vector<double> zero(20, 0.0);
  const std::vector<float> color{0.1f, 0.2f, 0.3f};
  EXPECT_EQ(apply_perturbation(image, zero, color).data, image.data);
}

TEST(ApplyPerturbation, FullMapWithZeroColorGivesZeroImage) {
  auto image = ramp(5, 4, 3, ColorSpace::normalized_zero_mean);
  for (auto& v : image.data) v = v * 4.0f - 2.0f;
  const std::vector<double> ones(20, 1.0);
  const std::vector<float> zero{0.0f, 0.0f, 0.0f};
  for (float v : apply_perturbation(image, ones, zero).data) EXPECT_EQ(v, 0.0f);
}

TEST(ApplyPerturbation, ConvexCombination) {
  Image image{1, 1, 1, {0.8f}, ColorSpace::unit_0_1};
  const std::vector<double> map{0.25};
  const std::vector<float> color{0.0f};
  EXPECT_FLOAT_EQ(apply_perturbation(image, map, color).data[0], 0.6f);
}

TEST(ApplyPerturbation, StaysBetweenInputAndColor) {
  const auto image = ramp(6, 6, 3);
  const auto stack = build_masks(grid_segment(6, 6, 2, 2), SmoothingConfig{SmoothingMethod::gaussian_filter, 1.5, {}});
  const std::vector<std::uint8_t> sample{1, 0, 1, 0};
  const auto map = combine(stack, sample);
  const std::vector<float> color{0.9f, 0.1f, 0.5f};
  const auto out = apply_perturbation(image, map, color);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float lo = std::min(image.data[i], color[i % 3]), hi = std::max(image.data[i], color[i % 3]);
    ASSERT_GE(out.data[i], lo - 1e-6f);
    ASSERT_LE(out.data[i], hi + 1e-6f);
  }
}

TEST(ApplyPerturbation, GrayMatchesReplicatedRgb) {
  const auto gray = ramp(7, 5, 1);
  Image rgb{7, 5, 3, {}, ColorSpace::unit_0_1};
  for (float v : gray.data) rgb.data.insert(rgb.data.end(), {v, v, v});
  std::vector<double> map(35);
  for (std::size_t p = 0; p < map.size(); ++p) map[p] = (p % 7) / 6.0;
  const auto g = apply_perturbation(gray, map, std::vector<float>{0.3f});
  const auto c = apply_perturbation(rgb, map, std::vector<float>{0.3f, 0.3f, 0.3f});
  for (std::size_t p = 0; p < 35; ++p)
    for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(c.data[p * 3 + ch], g.data[p]);
}

TEST(ApplyPerturbation, ChannelOrderCommutes) {
  const auto image = ramp(4, 4, 3);
  Image swapped = image;
  for (std::size_t p = 0; p < 16; ++p) std::swap(swapped.data[p * 3], swapped.data[p * 3 + 2]);
  std::vector<double> map(16, 0.4);
  const auto a = apply_perturbation(image, map, std::vector<float>{0.1f, 0.5f, 0.9f});
  const auto b = apply_perturbation(swapped, map, std::vector<float>{0.9f, 0.5f, 0.1f});
  for (std::size_t p = 0; p < 16; ++p) {
    EXPECT_EQ(a.data[p * 3], b.data[p * 3 + 2]);
    EXPECT_EQ(a.data[p * 3 + 1], b.data[p * 3 + 1]);
  }
}

TEST(ApplyPerturbation, RejectsBadInputs) {
  const auto image = ramp(2, 2, 3);
  const std::vector<float> color{0, 0, 0};
  EXPECT_THROW(apply_perturbation(image, std::vector<double>(3, 0.0), color), InvalidArgument);
  EXPECT_THROW(apply_perturbation(image, std::vector<double>(4, 1.5), color), InvalidArgument);
  EXPECT_THROW(apply_perturbation(image, std::vector<double>(4, 0.0), std::vector<float>{0}), InvalidArgument);
}

TEST(ApplyPerturbation, SerialAndParallelKernelsIdentical) {
  const auto image = harness::synthetic_image(33, 29, 3, 4);
  std::vector<double> map(33 * 29);
  for (std::size_t p = 0; p < map.size(); ++p) map[p] = (p % 13) / 12.0;
  const std::vector<float> color{0.2f, 0.4f, 0.6f};
  std::vector<float> a(image.data.size()), b(image.data.size());
  kernels::serial::apply_perturbation(image, map, color, a);
  kernels::parallel::apply_perturbation(image, map, color, b);
  EXPECT_EQ(a, b);
}

TEST(PerturbBatch, Examples) {
  const auto image = ramp(8, 8, 3);
  const auto segments = grid_segment(8, 8, 2, 2);
  const auto stack = indicator_masks(segments);
  const std::vector<float> color{0.5f, 0.5f, 0.5f};
  const auto samples = sample_only_one(4);
  const auto images = perturb_batch(image, stack, samples, color);
  ASSERT_EQ(images.size(), 5u);
  EXPECT_EQ(images[0].data, image.data);
  for (int s = 0; s < 4; ++s) {
    const auto& out = images[s + 1];
    for (std::size_t p = 0; p < 64; ++p)
      for (int ch = 0; ch < 3; ++ch) {
        const float want = segments.labels[p] == s ? color[ch] : image.data[p * 3 + ch];
        ASSERT_EQ(out.data[p * 3 + ch], want);
      }
  }
}

TEST(PerturbBatch, OnlyOneOn224) {
  const auto image = harness::synthetic_image(224, 224, 3, 1);
  const auto stack = indicator_masks(grid_segment(224, 224, 7, 7));
  const auto samples = sample_only_one(49);
  const PerturbationStream stream(image, stack, samples, {0.0f, 0.0f, 0.0f});
  EXPECT_EQ(stream.size(), 50);
  EXPECT_EQ(stream.at(0).data, image.data);
  const auto batch = stream.batch(10, 5);
  ASSERT_EQ(batch.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(batch[i].data, stream.at(10 + i).data);
  EXPECT_THROW(stream.batch(48, 5), InvalidArgument);
}

TEST(ChannelMean, Simple) {
  Image image{1, 2, 3, {0, 1, 0.5f, 1, 0, 0.5f}, ColorSpace::unit_0_1};
  EXPECT_EQ(channel_mean(image), (std::vector<float>{0.5f, 0.5f, 0.5f}));
}

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "perturbx/attribution.hpp"
#include "perturbx/error.hpp"
#include "perturbx/masking.hpp"
#include "perturbx/sampling.hpp"
#include "perturbx/segmentation.hpp"

using namespace perturbx;

namespace {

SampleSet rows(const std::vector<std::string>& bits, SampleOrigin origin = SampleOrigin::random) {
  SampleSet set;
  set.n_samples = static_cast<int>(bits.size());
  set.n_segments = static_cast<int>(bits.front().size());
  set.origin = origin;
  for (const auto& r : bits)
    for (char c : r) set.indicators.push_back(c == '1');
  return set;
}

// Keys are perturbation indicators: 00 -> 1.0, 10 -> 0.4, 01 -> 0.7, 11 -> 0.1.
const std::vector<double> kTwoSegmentOutputs{1.0, 0.4, 0.7, 0.1};

void expect_near(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

bool throws_naming(const std::function<void()>& f, const std::string& text) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    return std::string(e.what()).find(text) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST(Pda, TwoSegmentFullFactorial) {
  expect_near(attribute_pda(oracle::full_factorial(2), kTwoSegmentOutputs, 1.0), {0.75, 0.6}, 1e-12);
}

TEST(Pda, OnlyOneSingleElementAverages) {
  expect_near(attribute_pda(sample_only_one(3), std::vector<double>{1.0, 0.4, 0.7, 0.9}, 1.0), {0.6, 0.3, 0.1},
              1e-12);
}

TEST(Pda, ConstantOutputGivesZero) {
  const auto set = sample_random(6, 40, 3);
  for (double w : attribute_pda(set, std::vector<double>(40, 0.3), 0.3)) EXPECT_NEAR(w, 0.0, 1e-15);
}

TEST(Pda, NeverPerturbedSegmentIsNamed) {
  const auto set = rows({"00", "10"});
  EXPECT_TRUE(throws_naming([&] { attribute_pda(set, std::vector<double>{1, 0}, 1.0); }, "segment 1"));
}

TEST(Rise, TwoSegmentFullFactorial) {
  expect_near(attribute_rise(oracle::full_factorial(2), kTwoSegmentOutputs), {0.85, 0.70}, 1e-12);
}

TEST(Rise, AllButOneTwoElementAverages) {
  expect_near(attribute_rise(sample_all_but_one(3), std::vector<double>{1.0, 0.4, 0.7, 0.9}), {0.7, 0.85, 0.95},
              1e-12);
}

TEST(Rise, ConstantOutputIsUniform) {
  const auto set = sample_random(5, 30, 8);
  for (double w : attribute_rise(set, std::vector<double>(30, 0.42))) EXPECT_DOUBLE_EQ(w, 0.42);
}

TEST(Rise, AlwaysPerturbedSegmentIsNamed) {
  const auto set = rows({"01", "11"});
  EXPECT_TRUE(throws_naming([&] { attribute_rise(set, std::vector<double>{1, 0}); }, "segment 1"));
}

TEST(Ciu, GlobalRangeExample) {
  const auto set = sample_only_one(2);
  const auto r = attribute_ciu(set, std::vector<double>{1.0, 0.4, 0.7}, 1.0, CiuMode::only_one,
                               CuNormalization::global_range);
  EXPECT_FALSE(r.degenerate);
  expect_near(r.weights, {0.5, 0.0}, 1e-12);
}

TEST(Ciu, ContextRangeExample) {
  // CI = (1.0, 0.5); CU over each context is 1.0 for both segments.
  const auto r = attribute_ciu(sample_only_one(2), std::vector<double>{1.0, 0.4, 0.7}, 1.0, CiuMode::only_one);
  expect_near(r.weights, {0.5, 0.25}, 1e-12);
}

TEST(Ciu, ConstantOutputsAreDegenerate) {
  const auto r = attribute_ciu(sample_only_one(4), std::vector<double>(5, 0.3), 0.3, CiuMode::only_one);
  EXPECT_TRUE(r.degenerate);
  for (double w : r.weights) EXPECT_EQ(w, 0.0);
}

TEST(Ciu, UtilityZeroWhenReferenceIsContextMinimum) {
  const auto r = attribute_ciu(sample_only_one(2), std::vector<double>{0.2, 0.5, 0.9}, 0.2, CiuMode::only_one);
  const double range = 0.9 - 0.2;
  expect_near(r.weights, {-0.5 * (0.3 / range), -0.5 * (0.7 / range)}, 1e-12);
  for (double w : r.weights) EXPECT_LE(w, 0.0);
}

TEST(Ciu, AllButOneUsesComplementContext) {
  // Segment s context: Y plus 1 - y for rows that perturb something but keep s.
  const std::vector<double> outputs{0.9, 0.2, 0.5, 0.6};
  const auto r = attribute_ciu(sample_all_but_one(3), outputs, 0.9, CiuMode::all_but_one, CuNormalization::global_range);
  const double range = 0.9 - 0.2;
  // s = 0 kept by row 1 (011) only.
  const double ci0 = (std::max(0.9, 1 - 0.2) - std::min(0.9, 1 - 0.2)) / range;
  // s = 0 perturbed in rows 2 and 3: min 0.5.
  const double cu0 = (0.9 - 0.5) / range;
  EXPECT_NEAR(r.weights[0], ci0 * (cu0 - 0.5), 1e-12);
}

TEST(Ciu, ModeMustMatchOrigin) {
  EXPECT_THROW(attribute_ciu(sample_all_but_one(3), std::vector<double>(4, 0.5), 0.5, CiuMode::only_one),
               InvalidArgument);
  const auto random = sample_random(3, 10, 1);
  EXPECT_THROW(attribute(AttributionMethod::CIU, random, std::vector<double>(10, 0.5), ReferenceOutputs{0.5}),
               InvalidArgument);
}

TEST(Lime, ExactlyAdditiveFit) {
  const auto fit = fit_lime(oracle::full_factorial(2), kTwoSegmentOutputs);
  EXPECT_NEAR(fit.bias, 0.1, 1e-12);
  expect_near(fit.weights, {0.6, 0.3}, 1e-12);
  EXPECT_NEAR(fit.residual_norm, 0.0, 1e-12);
  EXPECT_FALSE(fit.rank_deficient);
}

TEST(Lime, MatchesNormalEquationsOracle) {
  const auto set = sample_random(5, 60, 17);
  std::vector<double> outputs(60);
  std::vector<std::vector<double>> x(60, std::vector<double>(5));
  const CounterRng rng(4);
  for (int i = 0; i < 60; ++i) {
    outputs[i] = rng.uniform(i);
    for (int s = 0; s < 5; ++s) x[i][s] = set.perturbed(i, s) ? 0.0 : 1.0;
  }
  const auto expected = oracle::ols_normal_equations(x, outputs);
  const auto fit = fit_lime(set, outputs);
  EXPECT_NEAR(fit.bias, expected[0], 1e-10);
  for (int s = 0; s < 5; ++s) EXPECT_NEAR(fit.weights[s], expected[s + 1], 1e-10);
}

TEST(Lime, DuplicatedRowsGiveTheSameFit) {
  const auto set = sample_random(4, 20, 5);
  std::vector<double> outputs(20);
  for (int i = 0; i < 20; ++i) outputs[i] = std::sin(i + 1.0);
  SampleSet doubled = set;
  doubled.n_samples = 40;
  doubled.indicators.insert(doubled.indicators.end(), set.indicators.begin(), set.indicators.end());
  std::vector<double> doubled_out = outputs;
  doubled_out.insert(doubled_out.end(), outputs.begin(), outputs.end());
  const auto a = fit_lime(set, outputs), b = fit_lime(doubled, doubled_out);
  EXPECT_NEAR(a.bias, b.bias, 1e-10);
  expect_near(a.weights, b.weights, 1e-10);
}

TEST(Lime, FewSamplesAreRankDeficient) {
  const auto fit = fit_lime(rows({"000", "100", "010"}), std::vector<double>{1.0, 0.5, 0.2});
  EXPECT_TRUE(fit.rank_deficient);
  for (double w : fit.weights) EXPECT_TRUE(std::isfinite(w));
}

TEST(Shap, KernelWeight) {
  EXPECT_DOUBLE_EQ(shap_kernel_weight(4, 2), 0.125);
  EXPECT_DOUBLE_EQ(shap_kernel_weight(4, 1), 3.0 / (4 * 1 * 3));
  EXPECT_THROW(shap_kernel_weight(4, 0), InvalidArgument);
  EXPECT_THROW(shap_kernel_weight(4, 4), InvalidArgument);
  EXPECT_NEAR(shap_kernel_weight(49, 24), 48.0 / (oracle::binomial(49, 24) * 24 * 25),
              1e-12 * shap_kernel_weight(49, 24));
}

TEST(Shap, AdditiveDataMatchesLime) {
  const auto fit = fit_kernel_shap(oracle::full_factorial(2), kTwoSegmentOutputs, ReferenceOutputs{1.0});
  expect_near(fit.weights, {0.6, 0.3}, 1e-12);
}

TEST(Shap, SquaredSizeGame) {
  const auto set = oracle::full_factorial(3);
  std::vector<double> outputs(8);
  for (int i = 0; i < 8; ++i) {
    const int kept = __builtin_popcount(oracle::kept_mask(i, 3));
    outputs[i] = kept * kept;
  }
  expect_near(fit_kernel_shap(set, outputs, ReferenceOutputs{9.0}).weights, {3.0, 3.0, 3.0}, 1e-12);
}

TEST(Shap, RandomGamesMatchShapleyEnumeration) {
  for (int n = 2; n <= 7; ++n) {
    const CounterRng rng(100 + n);
    std::vector<double> value(1u << n);
    for (std::size_t m = 0; m < value.size(); ++m) value[m] = rng.uniform(m) * 2.0 - 1.0;
    const auto phi = oracle::shapley(n, [&](std::uint32_t mask) { return value[mask]; });
    std::vector<double> outputs(1u << n);
    for (int i = 0; i < (1 << n); ++i) outputs[i] = value[oracle::kept_mask(i, n)];
    const auto fit = fit_kernel_shap(oracle::full_factorial(n), outputs, ReferenceOutputs{value.back()});
    expect_near(fit.weights, phi, 1e-9);
  }
}

TEST(Shap, MissingAnchorsComeFromReferenceOutputs) {
  // Middle rows only; anchors supplied by the dedicated predictions.
  const auto full = oracle::full_factorial(3);
  std::vector<double> value(8);
  for (int m = 0; m < 8; ++m) value[m] = 0.3 * (m & 1) + 0.5 * ((m >> 1) & 1) - 0.2 * ((m >> 2) & 1) + 0.1;
  SampleSet middle = full;
  middle.indicators.clear();
  std::vector<double> outputs;
  for (int i = 1; i < 7; ++i) {
    auto r = full.row(i);
    middle.indicators.insert(middle.indicators.end(), r.begin(), r.end());
    outputs.push_back(value[oracle::kept_mask(i, 3)]);
  }
  middle.n_samples = 6;
  const auto fit = fit_kernel_shap(middle, outputs, ReferenceOutputs{value[7], value[0]});
  expect_near(fit.weights, {0.3, 0.5, -0.2}, 1e-12);
  EXPECT_NEAR(fit.bias, 0.1, 1e-12);
}

TEST(Attribute, DispatchesAndLabels) {
  const auto set = oracle::full_factorial(2);
  const ReferenceOutputs ref{1.0, 0.1};
  EXPECT_EQ(attribute(AttributionMethod::PDA, set, kTwoSegmentOutputs, ref).segment_weights,
            attribute_pda(set, kTwoSegmentOutputs, 1.0));
  const auto shap = attribute(AttributionMethod::SHAP, set, kTwoSegmentOutputs, ref);
  EXPECT_EQ(shap.method, AttributionMethod::SHAP);
  EXPECT_EQ(shap.reference_output, 1.0);
  EXPECT_THROW(attribute(static_cast<AttributionMethod>(99), set, kTwoSegmentOutputs, ref), InvalidArgument);
  EXPECT_THROW(attribute(AttributionMethod::PDA, set, std::vector<double>{1.0}, ref), InvalidArgument);
}

TEST(AffineInvariance, RankingsSurvivePositiveAffineMaps) {
  const auto model = [](const SampleSet& set, int i) {
    double y = 0.05;
    for (int s = 0; s < set.n_segments; ++s) y += set.perturbed(i, s) ? 0.0 : 0.1 * (s + 1) * ((s % 2) ? -1 : 1);
    return y + 0.01 * std::sin(7.0 * i);
  };
  for (const auto& set : {oracle::full_factorial(5), sample_random(5, 40, 77), sample_only_one(5)}) {
    std::vector<double> y(set.n_samples), z(set.n_samples);
    for (int i = 0; i < set.n_samples; ++i) {
      y[i] = model(set, i);
      z[i] = 2.5 * y[i] - 3.0;
    }
    const double ry = model(set, 0) + 0.3, rz = 2.5 * ry - 3.0;
    for (auto m : {AttributionMethod::PDA, AttributionMethod::RISE, AttributionMethod::LIME, AttributionMethod::SHAP}) {
      const auto a = attribute(m, set, y, ReferenceOutputs{ry}).segment_weights;
      const auto b = attribute(m, set, z, ReferenceOutputs{rz}).segment_weights;
      EXPECT_EQ(rank_segments(a, 1e-9), rank_segments(b, 1e-9)) << to_string(m);
    }
    if (set.origin == SampleOrigin::only_one) {
      const auto a = attribute_ciu(set, y, ry, CiuMode::only_one).weights;
      const auto b = attribute_ciu(set, z, rz, CiuMode::only_one).weights;
      expect_near(a, b, 1e-12);
    }
  }
}

TEST(Projection, UnsmoothedIsPiecewiseConstant) {
  const auto segments = grid_segment(6, 6, 2, 3);
  const std::vector<double> w{0.1, -0.2, 0.3, 0.4, 0.5, -0.6};
  std::size_t dropped = 99;
  const auto map = project_per_pixel(w, indicator_masks(segments), &dropped);
  EXPECT_EQ(dropped, 0u);
  EXPECT_EQ(map.values, expand_segment_weights(w, segments).values);
}

TEST(Projection, WeightedAveragePixel) {
  SegmentMaskStack stack;
  stack.n_segments = 2;
  stack.height = stack.width = 1;
  stack.masks = {0.5, 0.25};
  EXPECT_NEAR(project_per_pixel(std::vector<double>{0.85, 0.70}, stack).values[0], 0.8, 1e-12);
  stack.masks = {0.0, 1e-12};
  std::size_t dropped = 0;
  EXPECT_EQ(project_per_pixel(std::vector<double>{1.0, 1.0}, stack, &dropped).values[0], 0.0);
  EXPECT_EQ(dropped, 1u);
}

TEST(Projection, ConstantWeightsAndBounds) {
  const auto stack =
      build_masks(grid_segment(40, 40, 4, 4), SmoothingConfig{SmoothingMethod::gaussian_filter, 3.0, {}});
  for (double v : project_per_pixel(std::vector<double>(16, 0.37), stack).values) EXPECT_NEAR(v, 0.37, 1e-12);
  std::vector<double> w(16);
  for (int s = 0; s < 16; ++s) w[s] = std::cos(s * 1.3);
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  for (double v : project_per_pixel(w, stack).values) {
    ASSERT_GE(v, *lo - 1e-12);
    ASSERT_LE(v, *hi + 1e-12);
  }
  EXPECT_THROW(project_per_pixel(std::vector<double>(3, 0.0), stack), InvalidArgument);
}

TEST(RankSegments, StableTiesAndResolution) {
  EXPECT_EQ(rank_segments(std::vector<double>{0.2, 0.5, 0.2, 0.9}), (std::vector<int>{3, 1, 0, 2}));
  EXPECT_EQ(rank_segments(std::vector<double>{0.3 + 1e-12, 0.3}, 1e-9), (std::vector<int>{0, 1}));
  EXPECT_EQ(rank_segments(std::vector<double>{0.3, 0.3 + 1e-12}, 1e-9), (std::vector<int>{0, 1}));
  EXPECT_EQ(rank_segments(std::vector<double>{0.3, 0.3 + 1e-12}), (std::vector<int>{1, 0}));
}

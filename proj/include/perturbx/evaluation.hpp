#pragma once

#include <span>
#include <vector>

#include "perturbx/model.hpp"
#include "perturbx/types.hpp"

namespace perturbx {

enum class RankDirection { ascending, descending };

/// Pixel indices (row-major) ordered by attribution; ties keep row-major
/// order in both directions. Throws InvalidArgument on non-finite values.
std::vector<int> rank_pixels(std::span<const double> map, RankDirection direction);

/// Pixels occluded at step k (1-based) of `steps`: round((k-1)/(steps-1) * total), halves up.
std::size_t occluded_pixel_count(int step, int steps, std::size_t total);

struct OcclusionCurve {
  std::vector<double> scores;  // target-class score per step
  double mean = 0.0;
};

/// Step k occludes the first occluded_pixel_count(k) pixels of `ranking`
/// (all channels) with `color`; all steps go to the predictor as one batch.
OcclusionCurve occlusion_curve(Predictor& predictor, const Image& image, std::span<const int> ranking,
                               int target_class, int steps, std::span<const float> color);

struct FaithfulnessScore {
  double lif = 0.0;  // mean score, least influential pixels occluded first
  double mif = 0.0;  // mean score, most influential pixels occluded first
  double srg = 0.0;  // lif - mif
  int steps = 0;
  std::vector<float> occlusion_color;
};

/// LIF, MIF and SRG for a per-pixel attribution map. An empty `color`
/// means the per-channel mean of `image`.
FaithfulnessScore srg(Predictor& predictor, const Image& image, const PixelMap& attribution, int target_class,
                      int steps = 10, std::span<const float> color = {});

}  // namespace perturbx

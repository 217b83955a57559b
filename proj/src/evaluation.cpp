#include "perturbx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/perturbation.hpp"

namespace perturbx {

std::vector<int> rank_pixels(std::span<const double> map, RankDirection direction) {
  for (double v : map)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite attribution");
  std::vector<int> order(map.size());
  std::iota(order.begin(), order.end(), 0);
  if (direction == RankDirection::ascending) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return map[a] < map[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return map[a] > map[b]; });
  }
  return order;
}

std::size_t occluded_pixel_count(int step, int steps, std::size_t total) {
  if (steps < 2) throw InvalidArgument("occlusion needs at least two steps");
  if (step < 1 || step > steps) throw InvalidArgument("occlusion step out of range");
  const auto num = static_cast<unsigned long long>(step - 1) * total;
  const auto den = static_cast<unsigned long long>(steps - 1);
  return static_cast<std::size_t>((2 * num + den) / (2 * den));
}

OcclusionCurve occlusion_curve(Predictor& predictor, const Image& image, std::span<const int> ranking,
                               int target_class, int steps, std::span<const float> color) {
  const std::size_t total = image.pixel_count();
  if (ranking.size() != total) throw InvalidArgument("ranking must cover every pixel");
  if (static_cast<int>(color.size()) != image.channels)
    throw InvalidArgument("occlusion color channel count does not match the image");
  {
    std::vector<char> seen(total, 0);
    for (int p : ranking) {
      if (p < 0 || static_cast<std::size_t>(p) >= total || seen[p])
        throw InvalidArgument("ranking is not a permutation of the pixels");
      seen[p] = 1;
    }
  }
  if (target_class < 0 || target_class >= predictor.spec().n_classes)
    throw InvalidArgument("target class out of range");

  std::vector<Image> frames;
  frames.reserve(steps);
  Image current = image;
  std::size_t done = 0;
  for (int k = 1; k <= steps; ++k) {
    const std::size_t upto = occluded_pixel_count(k, steps, total);
    for (; done < upto; ++done) {
      const std::size_t p = static_cast<std::size_t>(ranking[done]);
      for (int ch = 0; ch < image.channels; ++ch) current.data[p * image.channels + ch] = color[ch];
    }
    frames.push_back(current);
  }

  const auto scores = predictor.predict_batch(frames);
  if (scores.size() != frames.size())
    throw TransportError(TransportError::Kind::malformed, "predictor returned the wrong number of score vectors");
  OcclusionCurve curve;
  curve.scores.reserve(steps);
  for (const auto& s : scores) curve.scores.push_back(s.at(target_class));
  curve.mean = std::accumulate(curve.scores.begin(), curve.scores.end(), 0.0) / steps;
  return curve;
}

FaithfulnessScore srg(Predictor& predictor, const Image& image, const PixelMap& attribution, int target_class,
                      int steps, std::span<const float> color) {
  if (attribution.height != image.height || attribution.width != image.width ||
      attribution.values.size() != image.pixel_count())
    throw InvalidArgument(fmt::format("attribution map {}x{} does not match image {}x{}", attribution.height,
                                      attribution.width, image.height, image.width));
  FaithfulnessScore score;
  score.steps = steps;
  score.occlusion_color = color.empty() ? channel_mean(image) : std::vector<float>(color.begin(), color.end());

  const auto least_first = rank_pixels(attribution.values, RankDirection::ascending);
  const auto most_first = rank_pixels(attribution.values, RankDirection::descending);
  score.lif = occlusion_curve(predictor, image, least_first, target_class, steps, score.occlusion_color).mean;
  score.mif = occlusion_curve(predictor, image, most_first, target_class, steps, score.occlusion_color).mean;
  score.srg = score.lif - score.mif;
  return score;
}

}  // namespace perturbx

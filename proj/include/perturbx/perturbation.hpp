#pragma once

#include <span>
#include <vector>

#include "perturbx/types.hpp"

namespace perturbx {

/// out(p, ch) = image(p, ch) * (1 - map(p)) + color(ch) * map(p).
Image apply_perturbation(const Image& image, std::span<const double> map, std::span<const float> color);

/// Lazily produces one perturbed image per sample row, in sample order.
/// Holds references to its inputs; they must outlive the stream.
class PerturbationStream {
 public:
  PerturbationStream(const Image& image, const SegmentMaskStack& stack, const SampleSet& samples,
                     std::vector<float> color);

  int size() const { return samples_.n_samples; }
  Image at(int sample) const;

  /// Images for samples [begin, begin + count), built in parallel and
  /// returned in sample order.
  std::vector<Image> batch(int begin, int count) const;

 private:
  const Image& image_;
  const SegmentMaskStack& stack_;
  const SampleSet& samples_;
  std::vector<float> color_;
};

/// Materializes every perturbed image. Convenient for small sets; large
/// runs should pull batches from PerturbationStream instead.
std::vector<Image> perturb_batch(const Image& image, const SegmentMaskStack& stack, const SampleSet& samples,
                                 std::span<const float> color);

/// Per-channel mean of an image.
std::vector<float> channel_mean(const Image& image);

}  // namespace perturbx

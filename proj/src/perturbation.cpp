#include "perturbx/perturbation.hpp"

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/kernels.hpp"
#include "perturbx/masking.hpp"

namespace perturbx {

namespace {

void check_color(const Image& image, std::span<const float> color) {
  if (static_cast<int>(color.size()) != image.channels)
    throw InvalidArgument(fmt::format("perturbation color has {} channels, image has {}", color.size(),
                                      image.channels));
}

}  // namespace

Image apply_perturbation(const Image& image, std::span<const double> map, std::span<const float> color) {
  if (map.size() != image.pixel_count())
    throw InvalidArgument(fmt::format("apply_perturbation: map has {} pixels, image has {}", map.size(),
                                      image.pixel_count()));
  check_color(image, color);
  for (double v : map)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("apply_perturbation: map value outside [0,1]");

  Image out{image.height, image.width, image.channels, std::vector<float>(image.data.size()), image.space};
  kernels::parallel::apply_perturbation(image, map, color, out.data);
  return out;
}

PerturbationStream::PerturbationStream(const Image& image, const SegmentMaskStack& stack,
                                       const SampleSet& samples, std::vector<float> color)
    : image_(image), stack_(stack), samples_(samples), color_(std::move(color)) {
  if (stack.height != image.height || stack.width != image.width)
    throw InvalidArgument("perturbation: mask stack dims do not match the image");
  if (samples.n_segments != stack.n_segments)
    throw InvalidArgument(fmt::format("perturbation: sample set has {} segments, masks have {}",
                                      samples.n_segments, stack.n_segments));
  check_color(image, color_);
}

Image PerturbationStream::at(int sample) const {
  if (sample < 0 || sample >= samples_.n_samples) throw InvalidArgument("perturbation: sample index out of range");
  std::vector<double> map(stack_.plane_size());
  kernels::parallel::combine(stack_, samples_.row(sample), map);
  Image out{image_.height, image_.width, image_.channels, std::vector<float>(image_.data.size()), image_.space};
  kernels::parallel::apply_perturbation(image_, map, color_, out.data);
  return out;
}

std::vector<Image> PerturbationStream::batch(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > samples_.n_samples)
    throw InvalidArgument("perturbation: batch range out of bounds");
  std::vector<Image> out(count);
  // Sample-level parallelism; the per-pixel kernels run serially inside.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    std::vector<double> map(stack_.plane_size());
    kernels::serial::combine(stack_, samples_.row(begin + i), map);
    Image img{image_.height, image_.width, image_.channels, std::vector<float>(image_.data.size()),
              image_.space};
    kernels::serial::apply_perturbation(image_, map, color_, img.data);
    out[i] = std::move(img);
  }
  return out;
}

std::vector<Image> perturb_batch(const Image& image, const SegmentMaskStack& stack, const SampleSet& samples,
                                 std::span<const float> color) {
  PerturbationStream stream(image, stack, samples, {color.begin(), color.end()});
  return stream.batch(0, stream.size());
}

std::vector<float> channel_mean(const Image& image) {
  std::vector<double> sum(image.channels, 0.0);
  const std::size_t n = image.pixel_count();
  for (std::size_t p = 0; p < n; ++p)
    for (int ch = 0; ch < image.channels; ++ch) sum[ch] += image.data[p * image.channels + ch];
  std::vector<float> mean(image.channels);
  for (int ch = 0; ch < image.channels; ++ch) mean[ch] = n ? static_cast<float>(sum[ch] / n) : 0.0f;
  return mean;
}

}  // namespace perturbx

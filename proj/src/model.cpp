#include "perturbx/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/sampling.hpp"

namespace perturbx {

const char* to_string(OutputSemantics semantics) {
  return semantics == OutputSemantics::probabilities ? "probabilities" : "logits";
}

OutputSemantics output_semantics_from_string(const std::string& name) {
  if (name == "probabilities") return OutputSemantics::probabilities;
  if (name == "logits") return OutputSemantics::logits;
  throw InvalidArgument(fmt::format("unknown output semantics '{}'", name));
}

Violations validate(const PredictorSpec& spec) {
  Violations out;
  if (spec.height < 1 || spec.width < 1 || spec.channels < 1) out.push_back("input dims must be at least 1");
  if (spec.n_classes < 1) out.push_back("n_classes must be at least 1");
  if (spec.determinism_tolerance < 0.0) out.push_back("determinism tolerance must be non-negative");
  return out;
}

void Predictor::check_inputs(std::span<const Image> images) const {
  const auto& s = spec();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    if (img.height != s.height || img.width != s.width || img.channels != s.channels)
      throw InvalidArgument(fmt::format("image {} is {}x{}x{}, predictor expects {}x{}x{}", i, img.height, img.width,
                                        img.channels, s.height, s.width, s.channels));
    if (img.data.size() != img.pixel_count() * img.channels)
      throw InvalidArgument(fmt::format("image {} has a malformed data buffer", i));
  }
}

AdditiveModel::AdditiveModel(PixelMap coefficients, int target_class, int n_classes, int channels, double bias)
    : coeff_(std::move(coefficients)), target_(target_class), bias_(bias) {
  if (coeff_.values.size() != static_cast<std::size_t>(coeff_.height) * coeff_.width || coeff_.height < 1 ||
      coeff_.width < 1)
    throw InvalidArgument("additive model: malformed coefficient map");
  if (n_classes < 1 || target_class < 0 || target_class >= n_classes)
    throw InvalidArgument("additive model: target class out of range");
  spec_ = {coeff_.height, coeff_.width, channels, n_classes, OutputSemantics::logits,
           fmt::format("synthetic-additive-{}x{}", coeff_.height, coeff_.width), 0.0};
}

double AdditiveModel::score(const Image& image) const {
  const int channels = image.channels;
  double total = bias_;
  for (std::size_t p = 0; p < coeff_.values.size(); ++p) {
    double px = 0.0;
    for (int ch = 0; ch < channels; ++ch) px += image.data[p * channels + ch];
    total += coeff_.values[p] * (px / channels);
  }
  return total;
}

std::vector<ScoreVector> AdditiveModel::predict_batch(std::span<const Image> images) {
  check_inputs(images);
  std::vector<ScoreVector> out(images.size(), ScoreVector(spec_.n_classes, 0.0));
  for (std::size_t i = 0; i < images.size(); ++i) out[i][target_] = score(images[i]);
  return out;
}

PixelMap AdditiveModel::pixel_contributions(const Image& image, std::span<const float> color) const {
  if (image.height != coeff_.height || image.width != coeff_.width)
    throw InvalidArgument("additive model: image dims do not match the coefficients");
  if (static_cast<int>(color.size()) != image.channels)
    throw InvalidArgument("additive model: color channel count mismatch");
  double color_mean = 0.0;
  for (float c : color) color_mean += c;
  color_mean /= image.channels;
  PixelMap out{coeff_.height, coeff_.width, std::vector<double>(coeff_.values.size())};
  for (std::size_t p = 0; p < coeff_.values.size(); ++p) {
    double px = 0.0;
    for (int ch = 0; ch < image.channels; ++ch) px += image.data[p * image.channels + ch];
    out.values[p] = coeff_.values[p] * (px / image.channels - color_mean);
  }
  return out;
}

std::vector<double> AdditiveModel::segment_contributions(const Image& image, const SegmentMap& segments,
                                                         std::span<const float> color) const {
  const auto per_pixel = pixel_contributions(image, color);
  std::vector<double> out(segments.n_segments, 0.0);
  for (std::size_t p = 0; p < per_pixel.values.size(); ++p) out[segments.labels[p]] += per_pixel.values[p];
  return out;
}

AdditiveModel make_additive_model(PixelMap coefficients, int target_class, int n_classes, int channels) {
  return AdditiveModel(std::move(coefficients), target_class, n_classes, channels);
}

LogisticModel::LogisticModel(PixelMap coefficients, int target_class, int n_classes, int channels, double gain,
                             double offset)
    : linear_(std::move(coefficients), target_class, n_classes, channels), gain_(gain), offset_(offset) {
  if (n_classes < 2) throw InvalidArgument("logistic model: needs at least two classes");
  spec_ = linear_.spec();
  spec_.output_semantics = OutputSemantics::probabilities;
  spec_.identity = fmt::format("synthetic-logistic-{}x{}", spec_.height, spec_.width);
}

std::vector<ScoreVector> LogisticModel::predict_batch(std::span<const Image> images) {
  check_inputs(images);
  const int n = spec_.n_classes;
  std::vector<ScoreVector> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-gain_ * (linear_.score(images[i]) - offset_)));
    out[i].assign(n, (1.0 - p) / (n - 1));
    out[i][linear_.target_class()] = p;
  }
  return out;
}

PixelMap random_coefficients(int height, int width, std::uint64_t seed, double low, double high) {
  const CounterRng rng(seed);
  PixelMap out{height, width, std::vector<double>(static_cast<std::size_t>(height) * width)};
  for (std::size_t p = 0; p < out.values.size(); ++p) out.values[p] = low + (high - low) * rng.uniform(p);
  return out;
}

std::vector<ScoreVector> CountingPredictor::predict_batch(std::span<const Image> images) {
  ++calls_;
  images_ += images.size();
  return inner_.predict_batch(images);
}

std::vector<ScoreVector> predict_in_batches(Predictor& predictor, std::span<const Image> images, int batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  std::vector<ScoreVector> out;
  out.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, images.size() - begin);
    auto part = predictor.predict_batch(images.subspan(begin, count));
    if (part.size() != count)
      throw TransportError(TransportError::Kind::malformed,
                           fmt::format("predictor returned {} score vectors for {} images", part.size(), count));
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

int top_class(const ScoreVector& scores) {
  if (scores.empty()) throw InvalidArgument("top_class: empty score vector");
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

}  // namespace perturbx

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "perturbx/types.hpp"

namespace perturbx {

enum class OutputSemantics { probabilities, logits };

const char* to_string(OutputSemantics semantics);
OutputSemantics output_semantics_from_string(const std::string& name);

struct PredictorSpec {
  int height = 0;
  int width = 0;
  int channels = 0;
  int n_classes = 0;
  OutputSemantics output_semantics = OutputSemantics::probabilities;
  std::string identity;
  // Largest score difference the predictor may show on repeated input.
  double determinism_tolerance = 0.0;
};

Violations validate(const PredictorSpec& spec);

using ScoreVector = std::vector<double>;

/// Black-box classifier: one score vector per image, in input order.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual const PredictorSpec& spec() const = 0;
  virtual std::vector<ScoreVector> predict_batch(std::span<const Image> images) = 0;

  /// True when predict_batch may be called concurrently on one instance.
  virtual bool thread_safe() const { return false; }

 protected:
  /// Throws InvalidArgument unless every image matches spec().
  void check_inputs(std::span<const Image> images) const;
};

/// score(target) = bias + sum_p coeff(p) * mean over channels of pixel p;
/// every other class scores 0.
class AdditiveModel final : public Predictor {
 public:
  AdditiveModel(PixelMap coefficients, int target_class, int n_classes, int channels = 3, double bias = 0.0);

  const PredictorSpec& spec() const override { return spec_; }
  std::vector<ScoreVector> predict_batch(std::span<const Image> images) override;
  bool thread_safe() const override { return true; }

  double score(const Image& image) const;
  const PixelMap& coefficients() const { return coeff_; }
  int target_class() const { return target_; }

  /// Exact change in score from replacing every pixel of each segment by
  /// `color`: sum_{p in s} coeff(p) * (mean(pixel p) - mean(color)).
  std::vector<double> segment_contributions(const Image& image, const SegmentMap& segments,
                                            std::span<const float> color) const;

  /// Per-pixel version of segment_contributions.
  PixelMap pixel_contributions(const Image& image, std::span<const float> color) const;

 private:
  PredictorSpec spec_;
  PixelMap coeff_;
  int target_;
  double bias_;
};

AdditiveModel make_additive_model(PixelMap coefficients, int target_class, int n_classes, int channels = 3);

/// Probability-valued model: p(target) = sigmoid(gain * (linear - offset)),
/// where linear is the AdditiveModel score; the remaining mass is split
/// evenly over the other classes.
class LogisticModel final : public Predictor {
 public:
  LogisticModel(PixelMap coefficients, int target_class, int n_classes, int channels = 3, double gain = 1.0,
                double offset = 0.0);

  const PredictorSpec& spec() const override { return spec_; }
  std::vector<ScoreVector> predict_batch(std::span<const Image> images) override;
  bool thread_safe() const override { return true; }

 private:
  PredictorSpec spec_;
  AdditiveModel linear_;
  double gain_;
  double offset_;
};

/// Uniform(-1, 1) coefficients from CounterRng(seed), row-major.
PixelMap random_coefficients(int height, int width, std::uint64_t seed, double low = -1.0, double high = 1.0);

/// Forwards to another predictor and counts calls and images.
class CountingPredictor final : public Predictor {
 public:
  explicit CountingPredictor(Predictor& inner) : inner_(inner) {}

  const PredictorSpec& spec() const override { return inner_.spec(); }
  std::vector<ScoreVector> predict_batch(std::span<const Image> images) override;
  bool thread_safe() const override { return inner_.thread_safe(); }

  std::uint64_t calls() const { return calls_; }
  std::uint64_t images() const { return images_; }

 private:
  Predictor& inner_;
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> images_{0};
};

/// Splits `images` into chunks of at most batch_size and concatenates the
/// results in order.
std::vector<ScoreVector> predict_in_batches(Predictor& predictor, std::span<const Image> images, int batch_size);

/// Index of the largest score; the first one on ties.
int top_class(const ScoreVector& scores);

}  // namespace perturbx

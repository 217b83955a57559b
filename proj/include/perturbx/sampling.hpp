#pragma once

#include <cstdint>
#include <string_view>

#include "perturbx/types.hpp"

namespace perturbx {

/// Counter-based SplitMix64: value(i) = mix(key + (i + 1) * golden_gamma).
/// Any element of the stream can be computed independently, which keeps
/// sample sets reproducible across languages and thread layouts.
class CounterRng {
 public:
  static constexpr std::string_view kName = "splitmix64-counter";
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z);

  std::uint64_t at(std::uint64_t counter) const { return mix(key_ + (counter + 1) * kGamma); }
  /// Uniform in [0, 1) from the top 53 bits of at(counter).
  double uniform(std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

/// Per-image stream key: mix(seed ^ mix(fnv1a64(image_id))).
std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view image_id);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view text);

/// All-zeros row, then e_1 .. e_n.
SampleSet sample_only_one(int n_segments);

/// All-zeros row, then the complement of each e_s.
SampleSet sample_all_but_one(int n_segments);

/// Independent Bernoulli(0.5) rows. Row i, segment s uses bit (s % 64) of
/// CounterRng(seed).at(i * ceil(n/64) + s / 64).
SampleSet sample_random(int n_segments, int n_samples, std::uint64_t seed);

/// All-zeros, all-ones, then for c = 1, 2, ...: every row with exactly c
/// perturbed segments followed by every row with exactly c unperturbed
/// segments, each in lexicographic order of the chosen indices, skipping
/// rows already emitted. Requests beyond 2^n are cut and flagged.
SampleSet sample_entropic(int n_segments, int n_samples);

}  // namespace perturbx

#include "perturbx/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "perturbx/error.hpp"

namespace perturbx {

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double CounterRng::uniform(std::uint64_t counter) const {
  return static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view image_id) {
  return CounterRng::mix(seed ^ CounterRng::mix(fnv1a64(image_id)));
}

namespace {

SampleSet empty_set(int n_segments, int n_samples, SampleOrigin origin) {
  SampleSet set;
  set.n_segments = n_segments;
  set.n_samples = n_samples;
  set.origin = origin;
  set.indicators.assign(static_cast<std::size_t>(n_samples) * n_segments, 0);
  return set;
}

}  // namespace

SampleSet sample_only_one(int n_segments) {
  if (n_segments < 1) throw InvalidArgument("sample_only_one: n_segments must be at least 1");
  auto set = empty_set(n_segments, n_segments + 1, SampleOrigin::only_one);
  for (int s = 0; s < n_segments; ++s) set.indicators[static_cast<std::size_t>(s + 1) * n_segments + s] = 1;
  return set;
}

SampleSet sample_all_but_one(int n_segments) {
  if (n_segments < 1) throw InvalidArgument("sample_all_but_one: n_segments must be at least 1");
  auto set = empty_set(n_segments, n_segments + 1, SampleOrigin::all_but_one);
  for (int s = 0; s < n_segments; ++s) {
    auto* row = set.indicators.data() + static_cast<std::size_t>(s + 1) * n_segments;
    std::fill(row, row + n_segments, 1);
    row[s] = 0;
  }
  return set;
}

SampleSet sample_random(int n_segments, int n_samples, std::uint64_t seed) {
  if (n_segments < 1) throw InvalidArgument("sample_random: n_segments must be at least 1");
  if (n_samples < 1) throw InvalidArgument("sample_random: n_samples must be at least 1");
  auto set = empty_set(n_segments, n_samples, SampleOrigin::random);
  set.seed = seed;
  const CounterRng rng(seed);
  const std::uint64_t words = (static_cast<std::uint64_t>(n_segments) + 63) / 64;
  for (int i = 0; i < n_samples; ++i) {
    for (int s = 0; s < n_segments; ++s) {
      const std::uint64_t bits = rng.at(static_cast<std::uint64_t>(i) * words + s / 64);
      set.indicators[static_cast<std::size_t>(i) * n_segments + s] = (bits >> (s % 64)) & 1U;
    }
  }
  return set;
}

namespace {

// Advances `idx` (strictly increasing indices < n) to the next combination in
// lexicographic order; returns false after the last one.
bool next_combination(std::vector<int>& idx, int n) {
  const int k = static_cast<int>(idx.size());
  int i = k - 1;
  while (i >= 0 && idx[i] == n - k + i) --i;
  if (i < 0) return false;
  ++idx[i];
  for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  return true;
}

}  // namespace

SampleSet sample_entropic(int n_segments, int n_samples) {
  if (n_segments < 1) throw InvalidArgument("sample_entropic: n_segments must be at least 1");
  if (n_samples < 2) throw InvalidArgument("sample_entropic: n_samples must be at least 2");

  bool truncated = false;
  if (n_segments < 31 && n_samples > (1 << n_segments)) {
    n_samples = 1 << n_segments;
    truncated = true;
  }

  SampleSet set;
  set.n_segments = n_segments;
  set.origin = SampleOrigin::entropic;
  set.truncated = truncated;
  set.indicators.reserve(static_cast<std::size_t>(n_samples) * n_segments);

  std::vector<std::uint8_t> row(n_segments);
  int emitted = 0;
  auto emit = [&] {
    set.indicators.insert(set.indicators.end(), row.begin(), row.end());
    ++emitted;
  };

  std::fill(row.begin(), row.end(), 0);
  emit();
  std::fill(row.begin(), row.end(), 1);
  emit();

  for (int c = 1; emitted < n_samples && 2 * c <= n_segments; ++c) {
    // c perturbed, then c unperturbed; at 2c == n the second pass repeats the first.
    const bool mirrored_duplicates = 2 * c == n_segments;
    for (int side = 0; side < (mirrored_duplicates ? 1 : 2) && emitted < n_samples; ++side) {
      const std::uint8_t chosen = side == 0 ? 1 : 0;
      std::vector<int> idx(c);
      std::iota(idx.begin(), idx.end(), 0);
      do {
        std::fill(row.begin(), row.end(), static_cast<std::uint8_t>(1 - chosen));
        for (int i : idx) row[i] = chosen;
        emit();
      } while (emitted < n_samples && next_combination(idx, n_segments));
    }
  }
  set.n_samples = emitted;
  return set;
}

}  // namespace perturbx

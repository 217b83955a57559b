#include "perturbx/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace perturbx::kernels {

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += taps[k + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

namespace {

double blend(float value, float color, double amount) {
  return static_cast<double>(value) * (1.0 - amount) + static_cast<double>(color) * amount;
}

}  // namespace

namespace serial {

void gaussian_blur(std::span<const double> in, std::span<double> out, int height, int width, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int dr = -radius; dr <= radius; ++dr) {
        const int rr = reflect_index(r + dr, height);
        for (int dc = -radius; dc <= radius; ++dc) {
          const int cc = reflect_index(c + dc, width);
          acc += taps[dr + radius] * taps[dc + radius] * in[static_cast<std::size_t>(rr) * width + cc];
        }
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
}

void combine(const SegmentMaskStack& stack, std::span<const std::uint8_t> sample, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (int s = 0; s < stack.n_segments; ++s) {
    if (!sample[s]) continue;
    const auto mask = stack.mask(s);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += mask[p];
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
}

void apply_perturbation(const Image& image, std::span<const double> map, std::span<const float> color,
                        std::span<float> out) {
  const int channels = image.channels;
  for (std::size_t p = 0; p < map.size(); ++p)
    for (int ch = 0; ch < channels; ++ch)
      out[p * channels + ch] = static_cast<float>(blend(image.data[p * channels + ch], color[ch], map[p]));
}

std::size_t project_per_pixel(std::span<const double> weights, const SegmentMaskStack& stack,
                              std::span<double> out) {
  std::size_t dropped = 0;
  for (std::size_t p = 0; p < out.size(); ++p) {
    double num = 0.0, den = 0.0;
    for (int s = 0; s < stack.n_segments; ++s) {
      const double m = stack.mask(s)[p];
      num += weights[s] * m;
      den += m;
    }
    if (den < kMinMaskTotal) {
      out[p] = 0.0;
      ++dropped;
    } else {
      out[p] = num / den;
    }
  }
  return dropped;
}

}  // namespace serial

namespace parallel {

constexpr std::size_t kTile = 1024;

namespace {

void blur_rows(const double* in, double* out, int height, int width, const std::vector<double>& taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  for (int r = 0; r < height; ++r) {
    const double* row = in + static_cast<std::size_t>(r) * width;
    double* dst = out + static_cast<std::size_t>(r) * width;
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * row[reflect_index(c + k, width)];
      dst[c] = acc;
    }
  }
}

void blur_cols(const double* in, double* out, int height, int width, const std::vector<double>& taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  for (int r = 0; r < height; ++r) {
    double* dst = out + static_cast<std::size_t>(r) * width;
    std::fill(dst, dst + width, 0.0);
    for (int k = -radius; k <= radius; ++k) {
      const double* src = in + static_cast<std::size_t>(reflect_index(r + k, height)) * width;
      const double t = taps[k + radius];
      for (int c = 0; c < width; ++c) dst[c] += t * src[c];
    }
  }
}

}  // namespace

void gaussian_blur(std::span<const double> in, std::span<double> out, int height, int width, double sigma) {
  const auto taps = gaussian_taps(sigma);
  std::vector<double> tmp(in.size());
  const int radius = static_cast<int>(taps.size() / 2);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < height; ++r) blur_rows(in.data() + static_cast<std::size_t>(r) * width,
                                             tmp.data() + static_cast<std::size_t>(r) * width, 1, width, taps);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < height; ++r) {
    double* dst = out.data() + static_cast<std::size_t>(r) * width;
    std::fill(dst, dst + width, 0.0);
    for (int k = -radius; k <= radius; ++k) {
      const double* src = tmp.data() + static_cast<std::size_t>(reflect_index(r + k, height)) * width;
      const double t = taps[k + radius];
      for (int c = 0; c < width; ++c) dst[c] += t * src[c];
    }
  }
}

void gaussian_blur_planes(std::span<double> planes, int n_planes, int height, int width, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
#pragma omp parallel
  {
    std::vector<double> tmp(plane);
#pragma omp for schedule(dynamic)
    for (int s = 0; s < n_planes; ++s) {
      double* data = planes.data() + plane * s;
      blur_rows(data, tmp.data(), height, width, taps);
      blur_cols(tmp.data(), data, height, width, taps);
    }
  }
}

void combine(const SegmentMaskStack& stack, std::span<const std::uint8_t> sample, std::span<double> out) {
  std::vector<int> active;
  for (int s = 0; s < stack.n_segments; ++s)
    if (sample[s]) active.push_back(s);
  const std::size_t plane = stack.plane_size();
  const double* masks = stack.masks.data();
  const auto tiles = static_cast<std::ptrdiff_t>((out.size() + kTile - 1) / kTile);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < tiles; ++t) {
    const std::size_t begin = t * kTile, end = std::min(out.size(), begin + kTile);
    double* acc = out.data();
    std::fill(acc + begin, acc + end, 0.0);
    for (int s : active) {
      const double* m = masks + plane * s;
      for (std::size_t p = begin; p < end; ++p) acc[p] += m[p];
    }
    for (std::size_t p = begin; p < end; ++p) acc[p] = std::clamp(acc[p], 0.0, 1.0);
  }
}

void apply_perturbation(const Image& image, std::span<const double> map, std::span<const float> color,
                        std::span<float> out) {
  const int channels = image.channels;
  const auto n = static_cast<std::ptrdiff_t>(map.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < n; ++p)
    for (int ch = 0; ch < channels; ++ch)
      out[p * channels + ch] = static_cast<float>(blend(image.data[p * channels + ch], color[ch], map[p]));
}

std::size_t project_per_pixel(std::span<const double> weights, const SegmentMaskStack& stack,
                              std::span<double> out) {
  const std::size_t plane = stack.plane_size();
  const double* masks = stack.masks.data();
  const int n_segments = stack.n_segments;
  const auto tiles = static_cast<std::ptrdiff_t>((out.size() + kTile - 1) / kTile);
  std::size_t dropped = 0;
#pragma omp parallel for schedule(static) reduction(+ : dropped)
  for (std::ptrdiff_t t = 0; t < tiles; ++t) {
    const std::size_t begin = t * kTile, end = std::min(out.size(), begin + kTile);
    double num[kTile] = {};
    double den[kTile] = {};
    for (int s = 0; s < n_segments; ++s) {
      const double* m = masks + plane * s;
      const double w = weights[s];
      for (std::size_t p = begin; p < end; ++p) {
        num[p - begin] += w * m[p];
        den[p - begin] += m[p];
      }
    }
    for (std::size_t p = begin; p < end; ++p) {
      if (den[p - begin] < kMinMaskTotal) {
        out[p] = 0.0;
        ++dropped;
      } else {
        out[p] = num[p - begin] / den[p - begin];
      }
    }
  }
  return dropped;
}

}  // namespace parallel

}  // namespace perturbx::kernels

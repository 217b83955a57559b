#include "perturbx/harness/heatmap.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/harness/png_io.hpp"

namespace perturbx::harness {

Image heatmap_overlay(const PixelMap& map, const Image& base) {
  if (map.height != base.height || map.width != base.width || map.values.size() != base.pixel_count())
    throw InvalidArgument(fmt::format("heatmap {}x{} does not match image {}x{}", map.height, map.width,
                                      base.height, base.width));
  if (base.channels != 1 && base.channels != 3) throw InvalidArgument("heatmap base must be gray or RGB");

  double lo = 0.0, hi = 0.0;
  if (!map.values.empty()) {
    const auto [mn, mx] = std::minmax_element(map.values.begin(), map.values.end());
    lo = *mn;
    hi = *mx;
  }
  const double span = hi - lo;

  Image out;
  out.height = base.height;
  out.width = base.width;
  out.channels = 3;
  out.space = ColorSpace::unit_0_1;
  out.data.resize(base.pixel_count() * 3);
  for (std::size_t p = 0; p < base.pixel_count(); ++p) {
    const double t = span > 0.0 ? (map.values[p] - lo) / span : 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      const float heat = static_cast<float>(kHeatLow[ch] + t * (kHeatHigh[ch] - kHeatLow[ch]));
      const float under = base.data[p * base.channels + (base.channels == 1 ? 0 : ch)];
      out.data[p * 3 + ch] = 0.5f * std::clamp(under, 0.0f, 1.0f) + 0.5f * heat;
    }
  }
  return out;
}

void render_heatmap(const PixelMap& map, const Image& base, const std::string& path) {
  write_png(heatmap_overlay(map, base), path);
}

}  // namespace perturbx::harness

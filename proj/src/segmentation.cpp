#include "perturbx/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "perturbx/error.hpp"

namespace perturbx {

SegmentMap grid_segment(int height, int width, int rows, int cols) {
  if (height < 1 || width < 1) throw InvalidArgument("grid_segment: image dimensions must be positive");
  if (rows < 1 || cols < 1) throw InvalidArgument("grid_segment: rows and cols must be at least 1");
  if (rows > height || cols > width)
    throw InvalidArgument(fmt::format("grid_segment: {}x{} grid does not fit a {}x{} image", rows, cols,
                                      height, width));
  SegmentMap map;
  map.height = height;
  map.width = width;
  map.n_segments = rows * cols;
  map.grid = GridShape{rows, cols};
  map.labels.resize(map.pixel_count());
  for (int r = 0; r < height; ++r) {
    const int cell_row = static_cast<int>(static_cast<long long>(r) * rows / height);
    for (int c = 0; c < width; ++c) {
      const int cell_col = static_cast<int>(static_cast<long long>(c) * cols / width);
      map.labels[static_cast<std::size_t>(r) * width + c] = cell_row * cols + cell_col;
    }
  }
  return map;
}

std::vector<std::array<double, 3>> to_lab(const Image& image) {
  if (image.space != ColorSpace::unit_0_1) throw InvalidArgument("to_lab: image must be in unit_0_1 space");
  auto linearize = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  auto f = [](double t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;

  std::vector<std::array<double, 3>> lab(image.pixel_count());
  for (std::size_t p = 0; p < lab.size(); ++p) {
    const float* px = image.data.data() + p * image.channels;
    const double r = linearize(px[0]);
    const double g = image.channels == 3 ? linearize(px[1]) : r;
    const double b = image.channels == 3 ? linearize(px[2]) : r;
    const double x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / xn;
    const double y = (0.212671 * r + 0.715160 * g + 0.072169 * b) / yn;
    const double z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / zn;
    const double fx = f(x), fy = f(y), fz = f(z);
    lab[p] = {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
  }
  return lab;
}

namespace {

struct Center {
  double l, a, b, y, x;
};

double sq(double v) { return v * v; }

double color_dist2(const std::array<double, 3>& p, const Center& c) {
  return sq(p[0] - c.l) + sq(p[1] - c.a) + sq(p[2] - c.b);
}

bool single_color(const Image& image) {
  const std::size_t n = image.pixel_count();
  for (std::size_t p = 1; p < n; ++p)
    for (int ch = 0; ch < image.channels; ++ch)
      if (image.data[p * image.channels + ch] != image.data[ch]) return false;
  return true;
}

SegmentMap fallback_grid(int height, int width, int n_segments) {
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_segments))));
  SegmentMap map = grid_segment(height, width, std::min(side, height), std::min(side, width));
  map.degenerate_fallback = true;
  return map;
}

// Labels the 4-connected components of `labels`; returns the component count.
int connected_components(const std::vector<std::int32_t>& labels, int height, int width,
                         std::vector<int>& component) {
  component.assign(labels.size(), -1);
  std::vector<int> stack;
  int count = 0;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (component[start] >= 0) continue;
    component[start] = count;
    stack.push_back(static_cast<int>(start));
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int r = p / width, c = p % width;
      const int neighbours[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& [nr, nc] : neighbours) {
        if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue;
        const int q = nr * width + nc;
        if (component[q] < 0 && labels[q] == labels[p]) {
          component[q] = count;
          stack.push_back(q);
        }
      }
    }
    ++count;
  }
  return count;
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

// Merges components below min_size into their largest adjacent group, then
// renumbers densely by first occurrence.
void enforce_connectivity(SegmentMap& map, double min_size) {
  const int height = map.height, width = map.width;
  std::vector<int> component;
  const int n_components = connected_components(map.labels, height, width, component);

  std::vector<int> parent(n_components);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<long long> size(n_components, 0);
  for (int c : component) ++size[c];

  // Components in scan order of their first pixel, which is their id order.
  std::vector<std::vector<int>> adjacent(n_components);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const int p = r * width + c;
      if (c + 1 < width && component[p] != component[p + 1]) {
        adjacent[component[p]].push_back(component[p + 1]);
        adjacent[component[p + 1]].push_back(component[p]);
      }
      if (r + 1 < height && component[p] != component[p + width]) {
        adjacent[component[p]].push_back(component[p + width]);
        adjacent[component[p + width]].push_back(component[p]);
      }
    }
  }

  std::vector<std::vector<int>> members(n_components);
  for (int comp = 0; comp < n_components; ++comp) members[comp] = {comp};

  for (int comp = 0; comp < n_components; ++comp) {
    const int root = find_root(parent, comp);
    if (static_cast<double>(size[root]) >= min_size) continue;
    int best = -1;
    for (int member : members[root]) {
      for (int n : adjacent[member]) {
        const int nroot = find_root(parent, n);
        if (nroot == root) continue;
        if (best < 0 || size[nroot] > size[best] || (size[nroot] == size[best] && nroot < best)) best = nroot;
      }
    }
    if (best < 0) continue;
    const int keep = std::min(root, best), drop = std::max(root, best);
    parent[drop] = keep;
    size[keep] += size[drop];
    members[keep].insert(members[keep].end(), members[drop].begin(), members[drop].end());
    members[drop].clear();
  }

  std::vector<int> dense(n_components, -1);
  int next = 0;
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    const int root = find_root(parent, component[p]);
    if (dense[root] < 0) dense[root] = next++;
    map.labels[p] = dense[root];
  }
  map.n_segments = next;
}

}  // namespace

SegmentMap slic_segment(const Image& image, int n_segments, const SlicOptions& options) {
  if (image.space != ColorSpace::unit_0_1) throw InvalidArgument("slic_segment: image must be in unit_0_1 space");
  if (n_segments < 2) throw InvalidArgument("slic_segment: n_segments must be at least 2");
  if (image.height < 1 || image.width < 1) throw InvalidArgument("slic_segment: empty image");
  if (options.max_iter < 1 || !(options.compactness > 0.0))
    throw InvalidArgument("slic_segment: max_iter and compactness must be positive");

  const int height = image.height, width = image.width;
  if (single_color(image)) return fallback_grid(height, width, n_segments);

  const auto lab = to_lab(image);
  const double step = std::sqrt(static_cast<double>(height) * width / n_segments);
  const int center_rows = std::max(1, static_cast<int>(std::lround(height / step)));
  const int center_cols = std::max(1, static_cast<int>(std::lround(width / step)));

  auto at = [&](int r, int c) -> const std::array<double, 3>& {
    return lab[static_cast<std::size_t>(r) * width + c];
  };
  auto gradient = [&](int r, int c) {
    const auto& up = at(std::max(r - 1, 0), c);
    const auto& down = at(std::min(r + 1, height - 1), c);
    const auto& left = at(r, std::max(c - 1, 0));
    const auto& right = at(r, std::min(c + 1, width - 1));
    double g = 0.0;
    for (int k = 0; k < 3; ++k) g += sq(down[k] - up[k]) + sq(right[k] - left[k]);
    return g;
  };

  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(center_rows) * center_cols);
  for (int i = 0; i < center_rows; ++i) {
    for (int j = 0; j < center_cols; ++j) {
      int r = std::min(height - 1, static_cast<int>((i + 0.5) * height / center_rows));
      int c = std::min(width - 1, static_cast<int>((j + 0.5) * width / center_cols));
      int best_r = r, best_c = c;
      double best_g = gradient(r, c);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue;
          const double g = gradient(nr, nc);
          if (g < best_g) {
            best_g = g;
            best_r = nr;
            best_c = nc;
          }
        }
      }
      const auto& p = at(best_r, best_c);
      centers.push_back({p[0], p[1], p[2], static_cast<double>(best_r), static_cast<double>(best_c)});
    }
  }

  const double spatial_scale2 = sq(options.compactness / step);
  const int window = static_cast<int>(std::ceil(step));
  std::vector<std::int32_t> labels(image.pixel_count(), -1);
  std::vector<double> best(image.pixel_count());

  for (int iter = 0; iter < options.max_iter; ++iter) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& ctr = centers[k];
      const int r0 = std::max(0, static_cast<int>(ctr.y) - window);
      const int r1 = std::min(height - 1, static_cast<int>(ctr.y) + window);
      const int c0 = std::max(0, static_cast<int>(ctr.x) - window);
      const int c1 = std::min(width - 1, static_cast<int>(ctr.x) + window);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * width + c;
          const double d = color_dist2(lab[p], ctr) + (sq(r - ctr.y) + sq(c - ctr.x)) * spatial_scale2;
          if (d < best[p]) {
            best[p] = d;
            labels[p] = static_cast<std::int32_t>(k);
          }
        }
      }
    }
    // Pixels outside every search window go to the globally nearest center.
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (std::isfinite(best[p])) continue;
      const int r = static_cast<int>(p / width), c = static_cast<int>(p % width);
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = color_dist2(lab[p], centers[k]) +
                         (sq(r - centers[k].y) + sq(c - centers[k].x)) * spatial_scale2;
        if (d < nearest) {
          nearest = d;
          labels[p] = static_cast<std::int32_t>(k);
        }
      }
    }

    std::vector<Center> sums(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<long long> counts(centers.size(), 0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      auto& s = sums[labels[p]];
      s.l += lab[p][0];
      s.a += lab[p][1];
      s.b += lab[p][2];
      s.y += static_cast<double>(p / width);
      s.x += static_cast<double>(p % width);
      ++counts[labels[p]];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double n = static_cast<double>(counts[k]);
      centers[k] = {sums[k].l / n, sums[k].a / n, sums[k].b / n, sums[k].y / n, sums[k].x / n};
    }
  }

  SegmentMap map;
  map.height = height;
  map.width = width;
  map.labels = std::move(labels);
  map.n_segments = static_cast<int>(centers.size());
  enforce_connectivity(map, static_cast<double>(height) * width / n_segments / 4.0);
  if (map.n_segments < 2) return fallback_grid(height, width, n_segments);
  return map;
}

bool segments_are_4_connected(const SegmentMap& map) {
  std::vector<int> component;
  const int count = connected_components(map.labels, map.height, map.width, component);
  return count == map.n_segments;
}

}  // namespace perturbx

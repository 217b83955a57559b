#include "perturbx/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/kernels.hpp"
#include "perturbx/least_squares.hpp"

namespace perturbx {

namespace {

void check_outputs(const SampleSet& samples, std::span<const double> outputs) {
  if (static_cast<int>(outputs.size()) != samples.n_samples)
    throw InvalidArgument(fmt::format("{} outputs for {} samples", outputs.size(), samples.n_samples));
  if (samples.indicators.size() != static_cast<std::size_t>(samples.n_samples) * samples.n_segments)
    throw InvalidArgument("sample set indicator matrix has the wrong shape");
}

bool row_is_zero(const SampleSet& samples, int i) {
  const auto r = samples.row(i);
  return std::all_of(r.begin(), r.end(), [](auto v) { return v == 0; });
}

}  // namespace

std::vector<double> attribute_pda(const SampleSet& samples, std::span<const double> outputs, double reference) {
  check_outputs(samples, outputs);
  std::vector<double> sum(samples.n_segments, 0.0);
  std::vector<int> count(samples.n_segments, 0);
  for (int i = 0; i < samples.n_samples; ++i)
    for (int s = 0; s < samples.n_segments; ++s)
      if (samples.perturbed(i, s)) {
        sum[s] += outputs[i];
        ++count[s];
      }
  std::vector<double> w(samples.n_segments);
  for (int s = 0; s < samples.n_segments; ++s) {
    if (count[s] == 0) throw InvalidArgument(fmt::format("PDA: segment {} is never perturbed", s));
    w[s] = reference - sum[s] / count[s];
  }
  return w;
}

std::vector<double> attribute_rise(const SampleSet& samples, std::span<const double> outputs) {
  check_outputs(samples, outputs);
  std::vector<double> sum(samples.n_segments, 0.0);
  std::vector<int> count(samples.n_segments, 0);
  for (int i = 0; i < samples.n_samples; ++i)
    for (int s = 0; s < samples.n_segments; ++s)
      if (!samples.perturbed(i, s)) {
        sum[s] += outputs[i];
        ++count[s];
      }
  std::vector<double> w(samples.n_segments);
  for (int s = 0; s < samples.n_segments; ++s) {
    if (count[s] == 0) throw InvalidArgument(fmt::format("RISE: segment {} is never unperturbed", s));
    w[s] = sum[s] / count[s];
  }
  return w;
}

CiuResult attribute_ciu(const SampleSet& samples, std::span<const double> outputs, double reference,
                        CiuMode mode, CuNormalization cu) {
  check_outputs(samples, outputs);
  const SampleOrigin expected = mode == CiuMode::only_one ? SampleOrigin::only_one : SampleOrigin::all_but_one;
  if (samples.origin != expected)
    throw InvalidArgument(fmt::format("CIU in {} mode needs {} samples, got {}", to_string(expected),
                                      to_string(expected), to_string(samples.origin)));

  double lo = reference, hi = reference;
  for (double y : outputs) {
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  const double range = hi - lo;
  CiuResult result;
  result.weights.assign(samples.n_segments, 0.0);
  if (range == 0.0) {
    result.degenerate = true;
    return result;
  }

  for (int s = 0; s < samples.n_segments; ++s) {
    double cmin = reference, cmax = reference;
    double perturbed_min = std::numeric_limits<double>::infinity();
    bool any_context = false;
    for (int i = 0; i < samples.n_samples; ++i) {
      const bool perturbed = samples.perturbed(i, s);
      if (perturbed) perturbed_min = std::min(perturbed_min, outputs[i]);
      double value;
      if (mode == CiuMode::only_one) {
        if (!perturbed) continue;
        value = outputs[i];
      } else {
        if (perturbed || row_is_zero(samples, i)) continue;
        value = 1.0 - outputs[i];
      }
      cmin = std::min(cmin, value);
      cmax = std::max(cmax, value);
      any_context = true;
    }
    if (!any_context) throw InvalidArgument(fmt::format("CIU: segment {} has no context samples", s));

    const double importance = (cmax - cmin) / range;
    double utility;
    if (cu == CuNormalization::global_range) {
      if (!std::isfinite(perturbed_min)) throw InvalidArgument(fmt::format("CIU: segment {} is never perturbed", s));
      utility = (reference - perturbed_min) / range;
    } else {
      utility = cmax > cmin ? (reference - cmin) / (cmax - cmin) : 0.5;
    }
    result.weights[s] = importance * (utility - 0.5);
  }
  return result;
}

namespace {

Eigen::MatrixXd surrogate_design(const SampleSet& samples) {
  Eigen::MatrixXd design(samples.n_samples, samples.n_segments + 1);
  for (int i = 0; i < samples.n_samples; ++i) {
    design(i, 0) = 1.0;
    for (int s = 0; s < samples.n_segments; ++s) design(i, s + 1) = samples.perturbed(i, s) ? 0.0 : 1.0;
  }
  return design;
}

SurrogateFit to_fit(const LeastSquaresSolution& sol, int n_segments) {
  SurrogateFit fit;
  fit.bias = sol.x(0);
  fit.weights.assign(sol.x.data() + 1, sol.x.data() + 1 + n_segments);
  fit.residual_norm = sol.residual_norm;
  fit.rank_deficient = sol.rank < sol.unknowns;
  return fit;
}

}  // namespace

SurrogateFit fit_lime(const SampleSet& samples, std::span<const double> outputs) {
  check_outputs(samples, outputs);
  if (samples.n_samples < 2) throw InvalidArgument("LIME: at least two samples are required");
  const Eigen::MatrixXd design = surrogate_design(samples);
  const Eigen::VectorXd targets = Eigen::Map<const Eigen::VectorXd>(outputs.data(), outputs.size());
  const auto sol = solve_constrained_wls(design, targets, Eigen::VectorXd::Ones(samples.n_samples),
                                         Eigen::MatrixXd(0, design.cols()), Eigen::VectorXd(0));
  return to_fit(sol, samples.n_segments);
}

double shap_kernel_weight(int n_segments, int kept) {
  if (kept <= 0 || kept >= n_segments) throw InvalidArgument("SHAP kernel is undefined at empty or full coalitions");
  // binom(n, k) as a running product stays exact well past n = 49.
  double binom = 1.0;
  const int k = std::min(kept, n_segments - kept);
  for (int i = 1; i <= k; ++i) binom = binom * (n_segments - k + i) / i;
  return (n_segments - 1) / (binom * kept * (n_segments - kept));
}

SurrogateFit fit_kernel_shap(const SampleSet& samples, std::span<const double> outputs,
                             const ReferenceOutputs& reference) {
  check_outputs(samples, outputs);
  if (samples.n_samples < 2) throw InvalidArgument("SHAP: at least two samples are required");
  const int n = samples.n_segments;

  std::vector<int> middle;
  double full_sum = 0.0, empty_sum = 0.0;
  int full_count = 0, empty_count = 0;
  for (int i = 0; i < samples.n_samples; ++i) {
    const auto r = samples.row(i);
    const int kept = n - static_cast<int>(std::count(r.begin(), r.end(), 1));
    if (kept == n) {
      full_sum += outputs[i];
      ++full_count;
    } else if (kept == 0) {
      empty_sum += outputs[i];
      ++empty_count;
    } else {
      middle.push_back(i);
    }
  }

  const Eigen::MatrixXd all_rows = surrogate_design(samples);
  Eigen::MatrixXd design(middle.size(), n + 1);
  Eigen::VectorXd targets(middle.size());
  Eigen::VectorXd weights(middle.size());
  for (std::size_t j = 0; j < middle.size(); ++j) {
    const int i = middle[j];
    design.row(j) = all_rows.row(i);
    targets(j) = outputs[i];
    const int kept = static_cast<int>(all_rows.row(i).tail(n).sum());
    weights(j) = shap_kernel_weight(n, kept);
  }

  std::vector<std::pair<Eigen::RowVectorXd, double>> anchors;
  const std::optional<double> full_value =
      full_count ? std::optional<double>(full_sum / full_count) : std::optional<double>(reference.unperturbed);
  const std::optional<double> empty_value =
      empty_count ? std::optional<double>(empty_sum / empty_count) : reference.fully_perturbed;
  if (empty_value) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n + 1);
    row(0) = 1.0;
    anchors.emplace_back(row, *empty_value);
  }
  if (full_value) anchors.emplace_back(Eigen::RowVectorXd::Ones(n + 1), *full_value);

  Eigen::MatrixXd constraints(anchors.size(), n + 1);
  Eigen::VectorXd values(anchors.size());
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    constraints.row(k) = anchors[k].first;
    values(k) = anchors[k].second;
  }
  const auto sol = solve_constrained_wls(design, targets, weights, constraints, values);
  return to_fit(sol, n);
}

AttributionResult attribute(AttributionMethod method, const SampleSet& samples, std::span<const double> outputs,
                            const ReferenceOutputs& reference, const AttributeOptions& options) {
  AttributionResult result;
  result.method = method;
  result.reference_output = reference.unperturbed;
  switch (method) {
    case AttributionMethod::PDA:
      result.segment_weights = attribute_pda(samples, outputs, reference.unperturbed);
      break;
    case AttributionMethod::RISE:
      result.segment_weights = attribute_rise(samples, outputs);
      break;
    case AttributionMethod::CIU: {
      CiuMode mode;
      if (samples.origin == SampleOrigin::only_one) {
        mode = CiuMode::only_one;
      } else if (samples.origin == SampleOrigin::all_but_one) {
        mode = CiuMode::all_but_one;
      } else {
        throw InvalidArgument(fmt::format("CIU supports only_one and all_but_one sampling, not {}",
                                          to_string(samples.origin)));
      }
      auto ciu = attribute_ciu(samples, outputs, reference.unperturbed, mode, options.ciu_utility);
      result.segment_weights = std::move(ciu.weights);
      result.degenerate = ciu.degenerate;
      break;
    }
    case AttributionMethod::LIME:
      result.segment_weights = fit_lime(samples, outputs).weights;
      break;
    case AttributionMethod::SHAP:
      result.segment_weights = fit_kernel_shap(samples, outputs, reference).weights;
      break;
    default:
      throw InvalidArgument("unknown attribution method");
  }
  return result;
}

PixelMap project_per_pixel(std::span<const double> weights, const SegmentMaskStack& stack, std::size_t* dropped) {
  if (static_cast<int>(weights.size()) != stack.n_segments)
    throw InvalidArgument(fmt::format("project_per_pixel: {} weights for {} segments", weights.size(),
                                      stack.n_segments));
  PixelMap map{stack.height, stack.width, std::vector<double>(stack.plane_size())};
  const std::size_t zeroed = kernels::parallel::project_per_pixel(weights, stack, map.values);
  if (dropped) *dropped = zeroed;
  return map;
}

PixelMap expand_segment_weights(std::span<const double> weights, const SegmentMap& segments) {
  if (static_cast<int>(weights.size()) != segments.n_segments)
    throw InvalidArgument("expand_segment_weights: weight count does not match the segment map");
  PixelMap map{segments.height, segments.width, std::vector<double>(segments.pixel_count())};
  for (std::size_t p = 0; p < map.values.size(); ++p) map.values[p] = weights[segments.labels[p]];
  return map;
}

std::vector<int> rank_segments(std::span<const double> weights, double resolution) {
  std::vector<double> keys(weights.begin(), weights.end());
  if (resolution > 0.0)
    for (double& k : keys) k = std::round(k / resolution);
  std::vector<int> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] > keys[b]; });
  return order;
}

}  // namespace perturbx

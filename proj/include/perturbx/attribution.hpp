#pragma once

// Segment attribution from (sample set, model outputs) pairs.
//
// `outputs[i]` is the explained-class score for sample row i. Indicator 1
// means the segment was perturbed; the surrogate fits use the complementary
// feature x_s = 1 - indicator, so w_s measures what keeping segment s adds.

#include <optional>
#include <span>
#include <vector>

#include "perturbx/types.hpp"

namespace perturbx {

/// Predictions that come from dedicated model calls rather than the sample set.
struct ReferenceOutputs {
  double unperturbed = 0.0;                 // Y, the original image
  std::optional<double> fully_perturbed;    // every segment perturbed
};

/// w_s = Y - mean{ y_i : s perturbed in row i }.
std::vector<double> attribute_pda(const SampleSet& samples, std::span<const double> outputs, double reference);

/// w_s = mean{ y_i : s not perturbed in row i }.
std::vector<double> attribute_rise(const SampleSet& samples, std::span<const double> outputs);

enum class CiuMode { only_one, all_but_one };

/// How contextual utility is normalized.
///  - context_range: (Y - cmin) / (cmax - cmin) over the same context values
///    that define CI. CIU then ranks segments exactly like PDA and RISE on
///    only-one / all-but-one sample sets.
///  - global_range: (Y - min{y_i : s perturbed}) / (max - min over all outputs).
enum class CuNormalization { context_range, global_range };

struct CiuResult {
  std::vector<double> weights;
  bool degenerate = false;  // all outputs equal; weights are zero
};

/// Contextual influence CI * (CU - 0.5). The CI context for segment s is
/// {Y} plus, in only_one mode, the outputs with s perturbed; in all_but_one
/// mode, 1 - output for every perturbed row that keeps s. The range
/// normalizer spans every output and Y.
CiuResult attribute_ciu(const SampleSet& samples, std::span<const double> outputs, double reference,
                        CiuMode mode, CuNormalization cu = CuNormalization::context_range);

struct SurrogateFit {
  double bias = 0.0;
  std::vector<double> weights;
  double residual_norm = 0.0;
  bool rank_deficient = false;
};

/// Ordinary least squares y = b + sum_s w_s x_s; minimum-norm when the
/// design is rank deficient.
SurrogateFit fit_lime(const SampleSet& samples, std::span<const double> outputs);

/// Kernel SHAP weight for a coalition of `kept` unperturbed segments out of
/// n (0 < kept < n).
double shap_kernel_weight(int n_segments, int kept);

/// Kernel-weighted least squares. Rows keeping every segment or none are
/// equality constraints (b + sum w = value, b = value); an absent anchor row
/// is replaced by the matching reference prediction when one is available.
SurrogateFit fit_kernel_shap(const SampleSet& samples, std::span<const double> outputs,
                             const ReferenceOutputs& reference);

struct AttributeOptions {
  CuNormalization ciu_utility = CuNormalization::context_range;
};

/// Dispatches to the method above. CIU requires only_one or all_but_one samples.
AttributionResult attribute(AttributionMethod method, const SampleSet& samples, std::span<const double> outputs,
                            const ReferenceOutputs& reference, const AttributeOptions& options = {});

/// w_p = sum_s w_s M_s(p) / sum_s M_s(p); pixels whose mask total is below
/// 1e-9 get 0 and are counted in `dropped`.
PixelMap project_per_pixel(std::span<const double> weights, const SegmentMaskStack& stack,
                           std::size_t* dropped = nullptr);

/// Piecewise-constant map: every pixel takes its segment's weight.
PixelMap expand_segment_weights(std::span<const double> weights, const SegmentMap& segments);

/// Segment indices by descending weight, ties by ascending index. With
/// resolution > 0 weights are first rounded to that grid.
std::vector<int> rank_segments(std::span<const double> weights, double resolution = 0.0);

}  // namespace perturbx

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sise/extract.hpp"

namespace sise {

/// How the high-class sum of the adaptive threshold is formed. `inclusive`
/// sums Υ(i..n) over n - i (element i counted in both classes); `exclusive`
/// sums Υ(i+1..n), the classical partition.
enum class HighSumMode { inclusive, exclusive };

/// Plain SISE: keep maps whose normalized gradient exceeds a fixed mu.
struct FixedThreshold {
  double mu = 0.0;
};

/// Ada-SISE: per-layer mu chosen by an Otsu-style search over the
/// positive normalized gradients.
struct AdaptiveOtsu {
  HighSumMode high_sum = HighSumMode::inclusive;
};

using SelectionPolicy = std::variant<FixedThreshold, AdaptiveOtsu>;

/// "fixed(<mu>)" or "adaptive-otsu" (suffixed "-exclusive" for the variant).
std::string describe(const SelectionPolicy& policy);

/// Positive normalized gradients sorted ascending; origin[i] is the feature-map
/// index of values[i]. Equal values keep ascending origin order.
struct PositiveGradientSet {
  std::vector<double> values;
  std::vector<std::size_t> origin;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
};

template <typename T>
PositiveGradientSet build_positive_set(const LayerGradientReport<T>& report);

struct ClassMeans {
  double low = 0.0;
  double high = 0.0;
};

/// Split statistics at 1-based index i, 1 <= i <= n - 1:
///   low(i)  = (sum_{j<=i} v_j) / i * n
///   high(i) = (sum_{j>=i} v_j) / (n - i) * n        (inclusive mode)
/// Low sums accumulate in ascending order, high sums from the top down.
ClassMeans class_means(std::span<const double> values, std::size_t i,
                       HighSumMode mode = HighSumMode::inclusive);

/// tau(i) = low(i) * high(i) * ((n - 2i) / n)^2
double inter_class_variance(std::span<const double> values, std::size_t i,
                            HighSumMode mode = HighSumMode::inclusive);

struct OtsuSplit {
  std::size_t index = 0;  ///< 1-based split index maximizing tau (smallest on ties)
  double mu = 0.0;        ///< values[index - 1]
  double tau = 0.0;
};

/// Linear-time search over every interior split. nullopt when fewer than two
/// values or all values are equal: there is nothing to separate.
std::optional<OtsuSplit> otsu_split(std::span<const double> values, HighSumMode mode = HighSumMode::inclusive);

/// Threshold for the layer; 0 (keep every positive map) when no split exists.
double adaptive_mu(const PositiveGradientSet& set, HighSumMode mode = HighSumMode::inclusive);

/// Surviving feature maps of one layer, post-processed to input-sized masks.
template <typename T>
struct AttributionMaskSet {
  std::size_t layer = 0;
  std::vector<Tensor<T>> masks;
  std::vector<std::size_t> kept_indices;
  double mu_used = 0.0;
  std::size_t num_maps = 0;
  std::size_t positive_count = 0;
};

struct SelectionOutcome {
  std::vector<std::size_t> kept_indices;
  double mu = 0.0;
  std::size_t positive_count = 0;
};

/// Which maps survive `policy` (strict upsilon > mu), without post-processing.
/// Layers without positive gradients keep nothing.
template <typename T>
SelectionOutcome select_maps(const LayerGradientReport<T>& report, const SelectionPolicy& policy);

/// Bilinear resize to height x width followed by min-max normalization.
template <typename T>
Tensor<T> postprocess_map(std::span<const T> plane, std::size_t h, std::size_t w, std::size_t height,
                          std::size_t width);

template <typename T>
AttributionMaskSet<T> select_and_postprocess(const LayerGradientReport<T>& report, const SelectionPolicy& policy,
                                             std::size_t height, std::size_t width);

}  // namespace sise

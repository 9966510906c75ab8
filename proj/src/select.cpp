#include "sise/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sise/errors.hpp"
#include "sise/numcore.hpp"

namespace sise {

std::string describe(const SelectionPolicy& policy) {
  if (const auto* fixed = std::get_if<FixedThreshold>(&policy)) {
    std::ostringstream os;
    os << "fixed(" << fixed->mu << ")";
    return os.str();
  }
  const auto& adaptive = std::get<AdaptiveOtsu>(policy);
  return adaptive.high_sum == HighSumMode::inclusive ? "adaptive-otsu" : "adaptive-otsu-exclusive";
}

template <typename T>
PositiveGradientSet build_positive_set(const LayerGradientReport<T>& report) {
  PositiveGradientSet set;
  if (!report.upsilon) return set;
  const std::vector<T>& ups = *report.upsilon;
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < ups.size(); ++k) {
    if (ups[k] > T{0}) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ups[a] < ups[b]; });
  set.origin = order;
  set.values.reserve(order.size());
  for (const std::size_t k : order) set.values.push_back(static_cast<double>(ups[k]));
  return set;
}

namespace {

void check_split(std::size_t n, std::size_t i) {
  if (n < 2 || i < 1 || i > n - 1) {
    throw InvalidArgument("split index " + std::to_string(i) + " outside 1.." + std::to_string(n > 0 ? n - 1 : 0));
  }
}

double tau_from(double low_sum, double high_sum, std::size_t n, std::size_t i) {
  const double size = static_cast<double>(n);
  const double w_low = low_sum / static_cast<double>(i) * size;
  const double w_high = high_sum / static_cast<double>(n - i) * size;
  const double balance = (size - 2.0 * static_cast<double>(i)) / size;
  return w_low * w_high * (balance * balance);
}

}  // namespace

ClassMeans class_means(std::span<const double> values, std::size_t i, HighSumMode mode) {
  const std::size_t n = values.size();
  check_split(n, i);
  double low = 0.0;
  for (std::size_t j = 0; j < i; ++j) low += values[j];
  const std::size_t first_high = mode == HighSumMode::inclusive ? i - 1 : i;
  double high = 0.0;
  for (std::size_t j = n; j-- > first_high;) high += values[j];
  const double size = static_cast<double>(n);
  return {low / static_cast<double>(i) * size, high / static_cast<double>(n - i) * size};
}

double inter_class_variance(std::span<const double> values, std::size_t i, HighSumMode mode) {
  const ClassMeans m = class_means(values, i, mode);
  const double size = static_cast<double>(values.size());
  const double balance = (size - 2.0 * static_cast<double>(i)) / size;
  return m.low * m.high * (balance * balance);
}

std::optional<OtsuSplit> otsu_split(std::span<const double> values, HighSumMode mode) {
  const std::size_t n = values.size();
  if (n < 2) return std::nullopt;
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) return std::nullopt;

  // suffix[j] = values[j] + ... + values[n-1], accumulated from the top down.
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] + values[j];

  OtsuSplit best;
  bool found = false;
  double low = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    low += values[i - 1];
    const double high = mode == HighSumMode::inclusive ? suffix[i - 1] : suffix[i];
    const double tau = tau_from(low, high, n, i);
    if (!found || tau > best.tau) {
      best = {i, values[i - 1], tau};
      found = true;
    }
  }
  return best;
}

double adaptive_mu(const PositiveGradientSet& set, HighSumMode mode) {
  const auto split = otsu_split(set.values, mode);
  return split ? split->mu : 0.0;
}

template <typename T>
SelectionOutcome select_maps(const LayerGradientReport<T>& report, const SelectionPolicy& policy) {
  SelectionOutcome out;
  if (!report.upsilon) return out;
  const PositiveGradientSet positive = build_positive_set(report);
  out.positive_count = positive.size();
  if (const auto* fixed = std::get_if<FixedThreshold>(&policy)) {
    if (!std::isfinite(fixed->mu)) throw InvalidArgument("fixed threshold mu must be finite");
    out.mu = fixed->mu;
  } else {
    out.mu = adaptive_mu(positive, std::get<AdaptiveOtsu>(policy).high_sum);
  }
  const std::vector<T>& ups = *report.upsilon;
  for (std::size_t k = 0; k < ups.size(); ++k) {
    if (static_cast<double>(ups[k]) > out.mu) out.kept_indices.push_back(k);
  }
  return out;
}

template <typename T>
Tensor<T> postprocess_map(std::span<const T> plane, std::size_t h, std::size_t w, std::size_t height,
                          std::size_t width) {
  Tensor<T> map({h, w}, std::vector<T>(plane.begin(), plane.end()));
  return minmax_normalize(bilinear_resize(map, height, width));
}

template <typename T>
AttributionMaskSet<T> select_and_postprocess(const LayerGradientReport<T>& report, const SelectionPolicy& policy,
                                             std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw InvalidArgument("attribution masks need a positive target size");
  SelectionOutcome outcome = select_maps(report, policy);
  AttributionMaskSet<T> set;
  set.layer = report.layer;
  set.mu_used = outcome.mu;
  set.num_maps = report.num_maps();
  set.positive_count = outcome.positive_count;
  const std::size_t h = report.feature_maps.dim(1);
  const std::size_t w = report.feature_maps.dim(2);
  set.masks.reserve(outcome.kept_indices.size());
  for (const std::size_t k : outcome.kept_indices) {
    set.masks.push_back(postprocess_map(report.feature_maps.plane(k), h, w, height, width));
  }
  set.kept_indices = std::move(outcome.kept_indices);
  return set;
}

#define SISE_INSTANTIATE_SELECT(T)                                                                              \
  template PositiveGradientSet build_positive_set(const LayerGradientReport<T>&);                              \
  template SelectionOutcome select_maps(const LayerGradientReport<T>&, const SelectionPolicy&);                \
  template Tensor<T> postprocess_map(std::span<const T>, std::size_t, std::size_t, std::size_t, std::size_t);  \
  template AttributionMaskSet<T> select_and_postprocess(const LayerGradientReport<T>&, const SelectionPolicy&, \
                                                        std::size_t, std::size_t);

SISE_INSTANTIATE_SELECT(float)
SISE_INSTANTIATE_SELECT(double)

#undef SISE_INSTANTIATE_SELECT

}  // namespace sise

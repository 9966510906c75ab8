#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "sise/model.hpp"

namespace sise {

/// Gradient statistics of one pooling layer for one target class.
///  sigma[k]   = sum over all spatial positions of d logit_c / d F_k
///  rho        = max_k sigma[k]
///  upsilon[k] = sigma[k] / rho, only when rho > 0
template <typename T>
struct LayerGradientReport {
  std::size_t layer = 0;
  Tensor<T> feature_maps;
  std::vector<T> sigma;
  T rho{0};
  std::optional<std::vector<T>> upsilon;

  std::size_t num_maps() const { return sigma.size(); }
  /// False when rho <= 0: the layer contributes an empty selection.
  bool has_positive_gradients() const { return upsilon.has_value(); }
};

template <typename T>
LayerGradientReport<T> make_gradient_report(std::size_t layer, Tensor<T> feature_maps, const Tensor<T>& gradients);

/// Reports for every pooling layer from a single forward/backward pass.
template <typename T>
std::vector<LayerGradientReport<T>> extract_layers(const InspectableModel<T>& model, const Tensor<T>& image,
                                                    std::size_t class_index);

/// Report for pooling layer p (0-based).
template <typename T>
LayerGradientReport<T> extract_layer(const InspectableModel<T>& model, const Tensor<T>& image,
                                     std::size_t class_index, std::size_t p);

struct HistogramBin {
  double edge = 0.0;  ///< left edge
  std::size_t count = 0;
};

/// Equal-width histogram of upsilon (sigma when upsilon is undefined) between
/// its min and max; the last bin is closed. A degenerate range becomes
/// [v - 0.5, v + 0.5].
template <typename T>
std::vector<HistogramBin> gradient_histogram(const LayerGradientReport<T>& report, std::size_t bins);

std::vector<HistogramBin> value_histogram(const std::vector<double>& values, std::size_t bins);

}  // namespace sise

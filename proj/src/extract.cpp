#include "sise/extract.hpp"

#include <algorithm>
#include <cmath>

#include "sise/errors.hpp"
#include "sise/log.hpp"

namespace sise {

template <typename T>
LayerGradientReport<T> make_gradient_report(std::size_t layer, Tensor<T> feature_maps, const Tensor<T>& gradients) {
  if (gradients.rank() != 3 || gradients.shape() != feature_maps.shape()) {
    throw ShapeMismatch("gradient stack " + shape_to_string(gradients.shape()) + " does not match feature maps " +
                        shape_to_string(feature_maps.shape()));
  }
  LayerGradientReport<T> report;
  report.layer = layer;
  const std::size_t maps = gradients.dim(0);
  report.sigma.resize(maps);
  for (std::size_t k = 0; k < maps; ++k) {
    // Accumulate in double so 32-bit runs keep the spatial sum accurate.
    double sum = 0.0;
    for (const T g : gradients.plane(k)) sum += static_cast<double>(g);
    report.sigma[k] = static_cast<T>(sum);
  }
  report.rho = *std::max_element(report.sigma.begin(), report.sigma.end());
  report.feature_maps = std::move(feature_maps);
  if (report.rho > T{0}) {
    std::vector<T> upsilon(maps);
    for (std::size_t k = 0; k < maps; ++k) upsilon[k] = report.sigma[k] / report.rho;
    report.upsilon = std::move(upsilon);
  } else {
    log_warning("pooling layer " + std::to_string(layer + 1) + " has no positive-gradient feature maps");
  }
  return report;
}

template <typename T>
std::vector<LayerGradientReport<T>> extract_layers(const InspectableModel<T>& model, const Tensor<T>& image,
                                                    std::size_t class_index) {
  GradientCapture<T> captured = model.capture_gradients(image, class_index);
  std::vector<LayerGradientReport<T>> reports;
  reports.reserve(captured.gradients.size());
  for (std::size_t p = 0; p < captured.gradients.size(); ++p) {
    reports.push_back(make_gradient_report(p, std::move(captured.capture.feature_maps[p]), captured.gradients[p]));
  }
  return reports;
}

template <typename T>
LayerGradientReport<T> extract_layer(const InspectableModel<T>& model, const Tensor<T>& image,
                                     std::size_t class_index, std::size_t p) {
  if (p >= model.num_pooling_layers()) {
    throw InvalidArgument("pooling layer " + std::to_string(p) + " out of range (model has " +
                          std::to_string(model.num_pooling_layers()) + ")");
  }
  GradientCapture<T> captured = model.capture_gradients(image, class_index);
  return make_gradient_report(p, std::move(captured.capture.feature_maps[p]), captured.gradients[p]);
}

std::vector<HistogramBin> value_histogram(const std::vector<double>& values, std::size_t bins) {
  if (bins == 0) throw InvalidArgument("histogram needs at least one bin");
  std::vector<HistogramBin> out(bins);
  if (values.empty()) {
    for (std::size_t b = 0; b < bins; ++b) out[b].edge = static_cast<double>(b) / static_cast<double>(bins);
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) out[b].edge = lo + width * static_cast<double>(b);
  for (const double v : values) {
    auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
    out[std::min(b, bins - 1)].count += 1;
  }
  return out;
}

template <typename T>
std::vector<HistogramBin> gradient_histogram(const LayerGradientReport<T>& report, std::size_t bins) {
  const std::vector<T>& source = report.upsilon ? *report.upsilon : report.sigma;
  return value_histogram(std::vector<double>(source.begin(), source.end()), bins);
}

#define SISE_INSTANTIATE_EXTRACT(T)                                                                             \
  template LayerGradientReport<T> make_gradient_report(std::size_t, Tensor<T>, const Tensor<T>&);              \
  template std::vector<LayerGradientReport<T>> extract_layers(const InspectableModel<T>&, const Tensor<T>&,    \
                                                               std::size_t);                                   \
  template LayerGradientReport<T> extract_layer(const InspectableModel<T>&, const Tensor<T>&, std::size_t,     \
                                                std::size_t);                                                  \
  template std::vector<HistogramBin> gradient_histogram(const LayerGradientReport<T>&, std::size_t);

SISE_INSTANTIATE_EXTRACT(float)
SISE_INSTANTIATE_EXTRACT(double)

#undef SISE_INSTANTIATE_EXTRACT

}  // namespace sise

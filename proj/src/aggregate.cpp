#include "sise/aggregate.hpp"

#include <algorithm>
#include <chrono>

#include "sise/errors.hpp"
#include "sise/numcore.hpp"
#include "sise/parallel.hpp"

namespace sise {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
bool all_zero(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return v == T{0}; });
}

}  // namespace

std::string method_name(const SelectionPolicy& policy) {
  return std::holds_alternative<FixedThreshold>(policy) ? "sise" : "ada-sise";
}

template <typename T>
LayerVisualizationMap<T> score_masks(const InspectableModel<T>& model, const Tensor<T>& image,
                                     std::size_t class_index, const AttributionMaskSet<T>& masks,
                                     std::size_t workers) {
  const ImageShape in = model.input_shape();
  LayerVisualizationMap<T> out;
  out.layer = masks.layer;
  out.map = Tensor<T>({in.height, in.width}, T{0});
  if (masks.masks.empty()) return out;

  std::vector<T> scores(masks.masks.size());
  parallel_for(masks.masks.size(), workers, [&](std::size_t i) {
    scores[i] = model.forward_score(hadamard(image, masks.masks[i]), class_index);
  });

  Tensor<T> acc({in.height, in.width}, T{0});
  for (std::size_t i = 0; i < masks.masks.size(); ++i) {
    const Tensor<T>& m = masks.masks[i];
    for (std::size_t px = 0; px < acc.size(); ++px) acc[px] += scores[i] * m[px];
  }
  const T count = static_cast<T>(masks.masks.size());
  for (T& v : acc.values()) v /= count;
  out.map = minmax_normalize(acc);
  out.num_forwards = masks.masks.size();
  return out;
}

template <typename T>
Tensor<T> fuse(const std::vector<LayerVisualizationMap<T>>& layers) {
  if (layers.empty()) throw InvalidArgument("fuse: need at least one layer visualization map");
  const Shape shape = layers.front().map.shape();
  for (const auto& layer : layers) {
    if (layer.map.shape() != shape) throw ShapeMismatch("fuse: layer maps differ in shape");
  }
  Tensor<T> fused;
  for (const auto& layer : layers) {
    if (all_zero(layer.map)) continue;
    if (fused.empty()) {
      fused = layer.map;
      continue;
    }
    fused = minmax_normalize(hadamard(add(fused, layer.map), otsu_binarize(layer.map)));
  }
  if (fused.empty()) return Tensor<T>(shape, T{0});
  return fused;
}

template <typename T>
std::size_t argmax_class(const InspectableModel<T>& model, const Tensor<T>& image) {
  const CaptureResult<T> result = model.forward_capture(image);
  const auto probs = result.probs.values();
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

template <typename T>
ExplanationMap<T> explain(const InspectableModel<T>& model, const Tensor<T>& image, std::size_t class_index,
                          const SelectionPolicy& policy, const ExplainOptions& options) {
  const ImageShape in = model.input_shape();
  ExplanationMap<T> result;
  result.method = method_name(policy);
  result.policy = describe(policy);
  result.class_index = class_index;

  auto start = Clock::now();
  GradientCapture<T> captured = model.capture_gradients(image, class_index);
  std::vector<LayerGradientReport<T>> reports;
  reports.reserve(captured.gradients.size());
  for (std::size_t p = 0; p < captured.gradients.size(); ++p) {
    reports.push_back(make_gradient_report(p, std::move(captured.capture.feature_maps[p]), captured.gradients[p]));
  }
  result.confidence = static_cast<double>(captured.capture.probs[class_index]);
  result.timings.extract = seconds_since(start);

  start = Clock::now();
  std::vector<AttributionMaskSet<T>> selections;
  selections.reserve(reports.size());
  for (const auto& report : reports) selections.push_back(select_and_postprocess(report, policy, in.height, in.width));
  result.timings.select = seconds_since(start);

  start = Clock::now();
  std::vector<LayerVisualizationMap<T>> layer_maps;
  layer_maps.reserve(selections.size());
  for (const auto& selection : selections) {
    layer_maps.push_back(score_masks(model, image, class_index, selection, options.workers));
  }
  result.timings.score = seconds_since(start);

  start = Clock::now();
  result.map = fuse(layer_maps);
  result.timings.fuse = seconds_since(start);

  for (std::size_t p = 0; p < selections.size(); ++p) {
    LayerSummary summary;
    summary.layer = p;
    summary.num_maps = selections[p].num_maps;
    summary.positive_count = selections[p].positive_count;
    summary.kept = selections[p].kept_indices.size();
    summary.kept_indices = selections[p].kept_indices;
    summary.mu = selections[p].mu_used;
    summary.rho = static_cast<double>(reports[p].rho);
    summary.num_forwards = layer_maps[p].num_forwards;
    result.num_forwards += summary.num_forwards;
    result.layers.push_back(std::move(summary));
  }
  return result;
}

#define SISE_INSTANTIATE_AGGREGATE(T)                                                                            \
  template LayerVisualizationMap<T> score_masks(const InspectableModel<T>&, const Tensor<T>&, std::size_t,      \
                                                const AttributionMaskSet<T>&, std::size_t);                     \
  template Tensor<T> fuse(const std::vector<LayerVisualizationMap<T>>&);                                        \
  template std::size_t argmax_class(const InspectableModel<T>&, const Tensor<T>&);                              \
  template ExplanationMap<T> explain(const InspectableModel<T>&, const Tensor<T>&, std::size_t,                 \
                                     const SelectionPolicy&, const ExplainOptions&);

SISE_INSTANTIATE_AGGREGATE(float)
SISE_INSTANTIATE_AGGREGATE(double)

#undef SISE_INSTANTIATE_AGGREGATE

}  // namespace sise

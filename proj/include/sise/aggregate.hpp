#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sise/model.hpp"
#include "sise/select.hpp"

namespace sise {

template <typename T>
struct LayerVisualizationMap {
  std::size_t layer = 0;
  Tensor<T> map;  ///< H x W, min-max normalized; all zeros for an empty selection
  std::size_t num_forwards = 0;
};

struct PhaseTimings {
  double extract = 0.0;  ///< seconds
  double select = 0.0;
  double score = 0.0;
  double fuse = 0.0;

  double total() const { return extract + select + score + fuse; }
};

struct LayerSummary {
  std::size_t layer = 0;  ///< 0-based pooling index
  std::size_t num_maps = 0;
  std::size_t positive_count = 0;
  std::size_t kept = 0;
  double mu = 0.0;
  double rho = 0.0;
  std::size_t num_forwards = 0;
  std::vector<std::size_t> kept_indices;
};

template <typename T>
struct ExplanationMap {
  Tensor<T> map;  ///< H x W in [0,1]
  std::string method;  ///< "sise" or "ada-sise"
  std::string policy;  ///< describe(policy)
  std::size_t class_index = 0;
  double confidence = 0.0;  ///< softmax probability of class_index on the unmasked image
  PhaseTimings timings;
  std::vector<LayerSummary> layers;
  std::size_t num_forwards = 0;
};

struct ExplainOptions {
  std::size_t workers = 1;
};

/// "sise" for a fixed threshold, "ada-sise" for the adaptive policy.
std::string method_name(const SelectionPolicy& policy);

/// V = minmax_normalize(mean_m s_m * m) with s_m the class-c probability of
/// image * m. Masked passes run in parallel; the weighted sum is accumulated in
/// ascending mask order.
template <typename T>
LayerVisualizationMap<T> score_masks(const InspectableModel<T>& model, const Tensor<T>& image,
                                     std::size_t class_index, const AttributionMaskSet<T>& masks,
                                     std::size_t workers = 1);

/// Cascade shallow to deep: f <- V1, then f <- minmax_normalize((f + Vp) * otsu_binarize(Vp)).
/// All-zero layer maps are skipped; if every layer is zero the result is zero.
template <typename T>
Tensor<T> fuse(const std::vector<LayerVisualizationMap<T>>& layers);

/// Full pipeline: extract, select, score and fuse over every pooling layer.
template <typename T>
ExplanationMap<T> explain(const InspectableModel<T>& model, const Tensor<T>& image, std::size_t class_index,
                          const SelectionPolicy& policy, const ExplainOptions& options = {});

/// Index of the most probable class on the unmasked image (first on ties).
template <typename T>
std::size_t argmax_class(const InspectableModel<T>& model, const Tensor<T>& image);

}  // namespace sise

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sise/tensor.hpp"

namespace sise {

enum class LayerKind { conv, relu, maxpool, avgpool, global_avg_pool, dense, softmax };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// One layer of the micro-CNN. `in`/`out` are channel counts for conv and
/// feature counts for dense; unused for parameter-free layers.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = false;

  bool has_weights() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;

  Shape as_shape() const { return {height, width, channels}; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Layer graph of a micro-CNN. `pooling` lists, in order, the indices of the
/// down-sampling layers whose outputs are captured as feature maps.
struct Architecture {
  std::string name;
  ImageShape input;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;
  std::vector<std::size_t> pooling;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Expected weight/bias shapes for a layer (empty shape when the layer has none).
Shape weight_shape(const LayerSpec& layer);
Shape bias_shape(const LayerSpec& layer);

template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct CaptureResult {
  Tensor<T> logits;
  Tensor<T> probs;
  /// One M^p x h_p x w_p stack per pooling layer, shallow to deep.
  std::vector<Tensor<T>> feature_maps;
};

template <typename T>
struct GradientCapture {
  CaptureResult<T> capture;
  /// d logit_c / d F^p, same shapes as capture.feature_maps.
  std::vector<Tensor<T>> gradients;
};

/// A classifier that exposes what the explanation pipeline needs: confidence
/// scores, pooling-layer feature maps, and class-logit gradients w.r.t. them.
/// Implementations must be safe to call concurrently once constructed.
template <typename T>
class InspectableModel {
 public:
  virtual ~InspectableModel() = default;

  virtual ImageShape input_shape() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::size_t num_pooling_layers() const = 0;
  virtual Shape pooling_shape(std::size_t p) const = 0;

  virtual CaptureResult<T> forward_capture(const Tensor<T>& image) const = 0;
  /// Softmax probability of class c, without feature capture.
  virtual T forward_score(const Tensor<T>& image, std::size_t c) const = 0;
  virtual GradientCapture<T> capture_gradients(const Tensor<T>& image, std::size_t c) const = 0;

  std::vector<Tensor<T>> feature_gradients(const Tensor<T>& image, std::size_t c) const {
    return capture_gradients(image, c).gradients;
  }
};

/// Reference engine: conv3x3 (stride 1, zero pad), relu, maxpool2, avgpool2,
/// global average pool, dense, softmax head. Max-pool backward routes to the
/// first maximum in row-major window order.
template <typename T>
class MicroCnn final : public InspectableModel<T> {
 public:
  MicroCnn(Architecture arch, std::vector<LayerParams<T>> params);

  const Architecture& architecture() const noexcept { return arch_; }
  const std::vector<LayerParams<T>>& parameters() const noexcept { return params_; }

  ImageShape input_shape() const override { return arch_.input; }
  std::size_t num_classes() const override { return arch_.num_classes; }
  std::size_t num_pooling_layers() const override { return arch_.pooling.size(); }
  Shape pooling_shape(std::size_t p) const override { return shapes_.at(arch_.pooling.at(p) + 1); }

  CaptureResult<T> forward_capture(const Tensor<T>& image) const override;
  T forward_score(const Tensor<T>& image, std::size_t c) const override;
  GradientCapture<T> capture_gradients(const Tensor<T>& image, std::size_t c) const override;

  /// Logits obtained by substituting `features` for the output of pooling layer p
  /// and running the remaining layers forward.
  Tensor<T> logits_from_pooling(std::size_t p, const Tensor<T>& features) const;

  template <typename U>
  MicroCnn<U> cast() const {
    std::vector<LayerParams<U>> converted;
    converted.reserve(params_.size());
    for (const auto& lp : params_) {
      converted.push_back({lp.weight.empty() ? Tensor<U>() : lp.weight.template cast<U>(),
                           lp.bias.empty() ? Tensor<U>() : lp.bias.template cast<U>()});
    }
    return MicroCnn<U>(arch_, std::move(converted));
  }

 private:
  Tensor<T> to_planar(const Tensor<T>& image) const;
  Tensor<T> apply(std::size_t layer, const Tensor<T>& input) const;
  Tensor<T> backward(std::size_t layer, const Tensor<T>& input, const Tensor<T>& grad_out) const;
  std::size_t logits_layer() const { return arch_.layers.size() - 1; }

  Architecture arch_;
  std::vector<LayerParams<T>> params_;
  // shapes_[l] is the input shape of layer l; shapes_.back() the output of the head.
  std::vector<Shape> shapes_;
};

}  // namespace sise

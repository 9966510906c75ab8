#include "sise/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "sise/errors.hpp"

namespace sise {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::conv, "conv"},
    {LayerKind::relu, "relu"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::avgpool, "avgpool"},
    {LayerKind::global_avg_pool, "global_avg_pool"},
    {LayerKind::dense, "dense"},
    {LayerKind::softmax, "softmax"},
};

bool is_pooling(LayerKind kind) { return kind == LayerKind::maxpool || kind == LayerKind::avgpool; }

std::string layer_label(const LayerSpec& layer) { return "layer '" + layer.name + "'"; }

// Output shape of `layer` given its input shape; throws on inconsistency.
Shape infer_output(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::conv:
      if (in.size() != 3 || in[0] != layer.in) {
        throw ShapeMismatch(layer_label(layer) + ": conv expects " + std::to_string(layer.in) +
                            " input channels, incoming activation is " + shape_to_string(in));
      }
      if (layer.out == 0) throw ModelError(layer_label(layer) + ": conv needs a positive output channel count");
      return {layer.out, in[1], in[2]};
    case LayerKind::relu:
      return in;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      if (in.size() != 3 || in[1] < 2 || in[2] < 2) {
        throw ShapeMismatch(layer_label(layer) + ": 2x2 pooling needs a spatial input of at least 2x2, got " +
                            shape_to_string(in));
      }
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerKind::global_avg_pool:
      if (in.size() != 3) {
        throw ShapeMismatch(layer_label(layer) + ": global average pool needs a spatial input, got " +
                            shape_to_string(in));
      }
      return {in[0]};
    case LayerKind::dense:
      if (shape_volume(in) != layer.in) {
        throw ShapeMismatch(layer_label(layer) + ": dense expects " + std::to_string(layer.in) +
                            " input features, incoming activation is " + shape_to_string(in));
      }
      if (layer.out == 0) throw ModelError(layer_label(layer) + ": dense needs a positive output size");
      return {layer.out};
    case LayerKind::softmax:
      if (in.size() != 1) {
        throw ShapeMismatch(layer_label(layer) + ": softmax needs a vector input, got " + shape_to_string(in));
      }
      return in;
  }
  throw ModelError(layer_label(layer) + ": unknown layer kind");
}

template <typename T>
void conv3x3_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& out) {
  const std::size_t cin = in.dim(0);
  const std::size_t h = in.dim(1);
  const std::size_t w = in.dim(2);
  const std::size_t cout = out.dim(0);
  for (std::size_t o = 0; o < cout; ++o) {
    T* dst = out.data() + o * h * w;
    const T b = bias.empty() ? T{0} : bias[o];
    std::fill(dst, dst + h * w, b);
    for (std::size_t i = 0; i < cin; ++i) {
      const T* src = in.data() + i * h * w;
      const T* k = weight.data() + (o * cin + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const T wv = k[ky * 3 + kx];
          if (wv == T{0}) continue;
          // Output rows/cols whose tap (y + ky - 1, x + kx - 1) stays inside the input.
          const std::size_t y0 = ky == 0 ? 1 : 0;
          const std::size_t y1 = ky == 2 ? h - 1 : h;
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            T* drow = dst + y * w;
            const T* srow = src + (y + ky - 1) * w + kx - 1;
            for (std::size_t x = x0; x < x1; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& grad_out, const Tensor<T>& weight, Tensor<T>& grad_in) {
  const std::size_t cin = grad_in.dim(0);
  const std::size_t h = grad_in.dim(1);
  const std::size_t w = grad_in.dim(2);
  const std::size_t cout = grad_out.dim(0);
  for (std::size_t i = 0; i < cin; ++i) {
    T* dst = grad_in.data() + i * h * w;
    for (std::size_t o = 0; o < cout; ++o) {
      const T* g = grad_out.data() + o * h * w;
      const T* k = weight.data() + (o * cin + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const T wv = k[ky * 3 + kx];
          if (wv == T{0}) continue;
          const std::size_t y0 = ky == 0 ? 1 : 0;
          const std::size_t y1 = ky == 2 ? h - 1 : h;
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            const T* grow = g + y * w;
            T* drow = dst + (y + ky - 1) * w + kx - 1;
            for (std::size_t x = x0; x < x1; ++x) drow[x] += wv * grow[x];
          }
        }
      }
    }
  }
}

// Row-major position (0..3) of the first maximum in the 2x2 window at (2y, 2x).
template <typename T>
std::size_t window_argmax(const T* plane, std::size_t w, std::size_t y, std::size_t x) {
  const T* base = plane + 2 * y * w + 2 * x;
  const T vals[4] = {base[0], base[1], base[w], base[w + 1]};
  std::size_t best = 0;
  for (std::size_t k = 1; k < 4; ++k) {
    if (vals[k] > vals[best]) best = k;
  }
  return best;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  throw ModelError("unknown layer kind '" + std::string(text) + "'");
}

Shape weight_shape(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::conv:
      return {layer.out, layer.in, 3, 3};
    case LayerKind::dense:
      return {layer.out, layer.in};
    default:
      return {};
  }
}

Shape bias_shape(const LayerSpec& layer) {
  if (!layer.has_weights() || !layer.bias) return {};
  return {layer.out};
}

template <typename T>
MicroCnn<T>::MicroCnn(Architecture arch, std::vector<LayerParams<T>> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  const auto& layers = arch_.layers;
  if (arch_.input.height == 0 || arch_.input.width == 0 || arch_.input.channels == 0) {
    throw ModelError("model '" + arch_.name + "': input shape must be positive");
  }
  if (arch_.num_classes == 0) throw ModelError("model '" + arch_.name + "': needs at least one class");
  if (layers.empty() || layers.back().kind != LayerKind::softmax) {
    throw ModelError("model '" + arch_.name + "': the last layer must be a softmax head");
  }
  if (arch_.pooling.empty()) {
    throw ModelError("model '" + arch_.name + "': at least one pooling layer must be captured");
  }
  if (params_.size() != layers.size()) {
    throw ModelError("model '" + arch_.name + "': parameter list does not match the layer list");
  }
  for (std::size_t i = 0; i < arch_.pooling.size(); ++i) {
    const std::size_t idx = arch_.pooling[i];
    if (idx >= layers.size() || !is_pooling(layers[idx].kind)) {
      throw ModelError("model '" + arch_.name + "': captured layer #" + std::to_string(idx) +
                       " is not a maxpool/avgpool layer");
    }
    if (i > 0 && idx <= arch_.pooling[i - 1]) {
      throw ModelError("model '" + arch_.name + "': pooling layers must be listed shallow to deep");
    }
  }

  shapes_.reserve(layers.size() + 1);
  shapes_.push_back({arch_.input.channels, arch_.input.height, arch_.input.width});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& layer = layers[l];
    if (layer.kind == LayerKind::softmax && l + 1 != layers.size()) {
      throw ModelError(layer_label(layer) + ": softmax is only allowed as the final layer");
    }
    shapes_.push_back(infer_output(layer, shapes_.back()));

    const LayerParams<T>& p = params_[l];
    const Shape ws = weight_shape(layer);
    const Shape bs = bias_shape(layer);
    if ((ws.empty() && !p.weight.empty()) || (!ws.empty() && p.weight.shape() != ws)) {
      throw ShapeMismatch(layer_label(layer) + ": weight shape " + shape_to_string(p.weight.shape()) +
                          " does not match expected " + shape_to_string(ws));
    }
    if ((bs.empty() && !p.bias.empty()) || (!bs.empty() && p.bias.shape() != bs)) {
      throw ShapeMismatch(layer_label(layer) + ": bias shape " + shape_to_string(p.bias.shape()) +
                          " does not match expected " + shape_to_string(bs));
    }
  }
  if (shapes_.back() != Shape{arch_.num_classes}) {
    throw ShapeMismatch("model '" + arch_.name + "': head produces " + shape_to_string(shapes_.back()) + " but " +
                        std::to_string(arch_.num_classes) + " classes are declared");
  }
}

template <typename T>
Tensor<T> MicroCnn<T>::to_planar(const Tensor<T>& image) const {
  if (image.shape() != arch_.input.as_shape()) {
    throw ShapeMismatch("image shape " + shape_to_string(image.shape()) + " does not match model input " +
                        shape_to_string(arch_.input.as_shape()));
  }
  const std::size_t h = arch_.input.height;
  const std::size_t w = arch_.input.width;
  const std::size_t c = arch_.input.channels;
  Tensor<T> planar({c, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) planar[(ch * h + y) * w + x] = image[(y * w + x) * c + ch];
    }
  }
  return planar;
}

template <typename T>
Tensor<T> MicroCnn<T>::apply(std::size_t l, const Tensor<T>& in) const {
  const LayerSpec& layer = arch_.layers[l];
  const LayerParams<T>& p = params_[l];
  Tensor<T> out(shapes_[l + 1]);
  switch (layer.kind) {
    case LayerKind::conv:
      conv3x3_forward(in, p.weight, p.bias, out);
      break;
    case LayerKind::relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
      break;
    case LayerKind::maxpool:
    case LayerKind::avgpool: {
      const std::size_t w = in.dim(2);
      const std::size_t oh = out.dim(1);
      const std::size_t ow = out.dim(2);
      for (std::size_t ch = 0; ch < out.dim(0); ++ch) {
        const T* src = in.data() + ch * in.dim(1) * w;
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            const T* base = src + 2 * y * w + 2 * x;
            T v;
            if (layer.kind == LayerKind::maxpool) {
              v = std::max(std::max(base[0], base[1]), std::max(base[w], base[w + 1]));
            } else {
              v = (base[0] + base[1] + base[w] + base[w + 1]) / T{4};
            }
            out.at(ch, y, x) = v;
          }
        }
      }
      break;
    }
    case LayerKind::global_avg_pool: {
      const std::size_t area = in.dim(1) * in.dim(2);
      for (std::size_t ch = 0; ch < in.dim(0); ++ch) {
        T sum{0};
        for (const T v : in.plane(ch)) sum += v;
        out[ch] = sum / static_cast<T>(area);
      }
      break;
    }
    case LayerKind::dense: {
      for (std::size_t o = 0; o < layer.out; ++o) {
        const T* row = p.weight.data() + o * layer.in;
        T acc = p.bias.empty() ? T{0} : p.bias[o];
        for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * in[i];
        out[o] = acc;
      }
      break;
    }
    case LayerKind::softmax: {
      const T peak = *std::max_element(in.values().begin(), in.values().end());
      T total{0};
      for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(in[i] - peak);
        total += out[i];
      }
      for (std::size_t i = 0; i < in.size(); ++i) out[i] /= total;
      break;
    }
  }
  return out;
}

template <typename T>
Tensor<T> MicroCnn<T>::backward(std::size_t l, const Tensor<T>& in, const Tensor<T>& grad_out) const {
  const LayerSpec& layer = arch_.layers[l];
  const LayerParams<T>& p = params_[l];
  Tensor<T> grad_in(shapes_[l], T{0});
  switch (layer.kind) {
    case LayerKind::conv:
      conv3x3_backward(grad_out, p.weight, grad_in);
      break;
    case LayerKind::relu:
      for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > T{0} ? grad_out[i] : T{0};
      break;
    case LayerKind::maxpool:
    case LayerKind::avgpool: {
      const std::size_t w = in.dim(2);
      const std::size_t plane = in.dim(1) * w;
      for (std::size_t ch = 0; ch < grad_out.dim(0); ++ch) {
        const T* src = in.data() + ch * plane;
        T* dst = grad_in.data() + ch * plane;
        for (std::size_t y = 0; y < grad_out.dim(1); ++y) {
          for (std::size_t x = 0; x < grad_out.dim(2); ++x) {
            const T g = grad_out.at(ch, y, x);
            T* base = dst + 2 * y * w + 2 * x;
            if (layer.kind == LayerKind::maxpool) {
              const std::size_t k = window_argmax(src, w, y, x);
              base[(k / 2) * w + (k % 2)] += g;
            } else {
              const T share = g / T{4};
              base[0] += share;
              base[1] += share;
              base[w] += share;
              base[w + 1] += share;
            }
          }
        }
      }
      break;
    }
    case LayerKind::global_avg_pool: {
      const std::size_t area = in.dim(1) * in.dim(2);
      for (std::size_t ch = 0; ch < in.dim(0); ++ch) {
        const T share = grad_out[ch] / static_cast<T>(area);
        for (T& v : grad_in.plane(ch)) v = share;
      }
      break;
    }
    case LayerKind::dense:
      for (std::size_t o = 0; o < layer.out; ++o) {
        const T g = grad_out[o];
        if (g == T{0}) continue;
        const T* row = p.weight.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) grad_in[i] += row[i] * g;
      }
      break;
    case LayerKind::softmax:
      throw ModelError("backward through the softmax head is not supported; gradients start at the logits");
  }
  return grad_in;
}

template <typename T>
CaptureResult<T> MicroCnn<T>::forward_capture(const Tensor<T>& image) const {
  CaptureResult<T> result;
  Tensor<T> act = to_planar(image);
  std::size_t next_pool = 0;
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    if (l == logits_layer()) result.logits = act;
    act = apply(l, act);
    if (next_pool < arch_.pooling.size() && arch_.pooling[next_pool] == l) {
      result.feature_maps.push_back(act);
      ++next_pool;
    }
  }
  result.probs = std::move(act);
  return result;
}

template <typename T>
T MicroCnn<T>::forward_score(const Tensor<T>& image, std::size_t c) const {
  if (c >= arch_.num_classes) throw InvalidArgument("class index " + std::to_string(c) + " out of range");
  Tensor<T> act = to_planar(image);
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) act = apply(l, act);
  return act[c];
}

template <typename T>
GradientCapture<T> MicroCnn<T>::capture_gradients(const Tensor<T>& image, std::size_t c) const {
  if (c >= arch_.num_classes) throw InvalidArgument("class index " + std::to_string(c) + " out of range");
  const std::size_t head = logits_layer();
  std::vector<Tensor<T>> inputs;  // inputs[l] feeds layer l
  inputs.reserve(arch_.layers.size());
  inputs.push_back(to_planar(image));
  for (std::size_t l = 0; l < head; ++l) inputs.push_back(apply(l, inputs.back()));

  GradientCapture<T> out;
  out.capture.logits = inputs[head];
  out.capture.probs = apply(head, inputs[head]);
  for (const std::size_t idx : arch_.pooling) out.capture.feature_maps.push_back(inputs[idx + 1]);

  out.gradients.resize(arch_.pooling.size());
  const std::size_t shallowest = arch_.pooling.front();
  Tensor<T> grad(shapes_[head], T{0});
  grad[c] = T{1};
  std::size_t pool = arch_.pooling.size();
  for (std::size_t l = head; l-- > shallowest + 1;) {
    // `grad` is d logit_c / d (output of layer l).
    if (pool > 0 && arch_.pooling[pool - 1] == l) out.gradients[--pool] = grad;
    grad = backward(l, inputs[l], grad);
  }
  out.gradients[0] = grad;
  return out;
}

template <typename T>
Tensor<T> MicroCnn<T>::logits_from_pooling(std::size_t p, const Tensor<T>& features) const {
  const std::size_t idx = arch_.pooling.at(p);
  if (features.shape() != shapes_[idx + 1]) {
    throw ShapeMismatch("substitute features " + shape_to_string(features.shape()) + " do not match " +
                        shape_to_string(shapes_[idx + 1]));
  }
  Tensor<T> act = features;
  for (std::size_t l = idx + 1; l < logits_layer(); ++l) act = apply(l, act);
  return act;
}

template class MicroCnn<float>;
template class MicroCnn<double>;

}  // namespace sise

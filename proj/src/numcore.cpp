#include "sise/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sise {

namespace {

void require_2d(const Shape& shape, const char* what) {
  if (shape.size() != 2) {
    throw ShapeMismatch(std::string(what) + " expects a 2-D map, got " + shape_to_string(shape));
  }
}

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> corner_aligned_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double pos = out > 1 ? static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                               : 0.0;
    auto lo = static_cast<std::size_t>(std::floor(pos));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& src, std::size_t out_h, std::size_t out_w) {
  require_2d(src.shape(), "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw InvalidArgument("bilinear_resize: target size must be positive");
  const std::size_t h = src.dim(0);
  const std::size_t w = src.dim(1);
  if (h == out_h && w == out_w) return src;

  const auto rows = corner_aligned_taps(h, out_h);
  const auto cols = corner_aligned_taps(w, out_w);
  Tensor<T> out({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    const Tap& r = rows[i];
    for (std::size_t j = 0; j < out_w; ++j) {
      const Tap& c = cols[j];
      const double top = (1.0 - c.frac) * src.at(r.lo, c.lo) + c.frac * src.at(r.lo, c.hi);
      const double bottom = (1.0 - c.frac) * src.at(r.hi, c.lo) + c.frac * src.at(r.hi, c.hi);
      out.at(i, j) = static_cast<T>((1.0 - r.frac) * top + r.frac * bottom);
    }
  }
  return out;
}

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& t) {
  Tensor<T> out(t.shape(), T{0});
  if (t.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(t.values().begin(), t.values().end());
  const T lo = *lo_it;
  const T hi = *hi_it;
  if (!(hi > lo)) return out;
  const T range = hi - lo;
  for (std::size_t i = 0; i < t.size(); ++i) {
    // Clamp guards against 1-ulp overshoot from the division.
    out[i] = std::clamp((t[i] - lo) / range, T{0}, T{1});
  }
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  if (a.rank() == 3 && b.rank() == 2 && a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1)) {
    const std::size_t channels = a.dim(2);
    Tensor<T> out(a.shape());
    for (std::size_t p = 0; p < b.size(); ++p) {
      for (std::size_t ch = 0; ch < channels; ++ch) out[p * channels + ch] = a[p * channels + ch] * b[p];
    }
    return out;
  }
  throw ShapeMismatch("hadamard: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                      shape_to_string(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("add: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                        shape_to_string(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

std::size_t unit_bin(double value, std::size_t bins) {
  const double v = std::clamp(value, 0.0, 1.0);
  return std::min(static_cast<std::size_t>(v * static_cast<double>(bins)), bins - 1);
}

template <typename T>
std::optional<std::size_t> otsu_bin_threshold(const Tensor<T>& map, std::size_t bins) {
  if (bins < 2) throw InvalidArgument("otsu_binarize: need at least 2 bins");
  std::vector<double> hist(bins, 0.0);
  for (const T v : map.values()) hist[unit_bin(static_cast<double>(v), bins)] += 1.0;

  double total = 0.0;
  double total_moment = 0.0;
  std::size_t occupied = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    total += hist[b];
    total_moment += static_cast<double>(b) * hist[b];
    occupied += hist[b] > 0.0 ? 1 : 0;
  }
  if (occupied < 2) return std::nullopt;

  double low_weight = 0.0;
  double low_moment = 0.0;
  double best = -1.0;
  std::size_t best_t = 0;
  for (std::size_t t = 0; t + 1 < bins; ++t) {
    low_weight += hist[t];
    low_moment += static_cast<double>(t) * hist[t];
    const double high_weight = total - low_weight;
    if (low_weight == 0.0 || high_weight == 0.0) continue;
    const double diff = low_moment / low_weight - (total_moment - low_moment) / high_weight;
    const double between = low_weight * high_weight * diff * diff;
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

template <typename T>
Tensor<T> otsu_binarize(const Tensor<T>& map, std::size_t bins) {
  require_2d(map.shape(), "otsu_binarize");
  const auto threshold = otsu_bin_threshold(map, bins);
  Tensor<T> out(map.shape(), T{1});
  if (!threshold) return out;
  for (std::size_t i = 0; i < map.size(); ++i) {
    out[i] = unit_bin(static_cast<double>(map[i]), bins) > *threshold ? T{1} : T{0};
  }
  return out;
}

#define SISE_INSTANTIATE_NUMCORE(T)                                                       \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> minmax_normalize(const Tensor<T>&);                                 \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
  template std::optional<std::size_t> otsu_bin_threshold(const Tensor<T>&, std::size_t); \
  template Tensor<T> otsu_binarize(const Tensor<T>&, std::size_t);

SISE_INSTANTIATE_NUMCORE(float)
SISE_INSTANTIATE_NUMCORE(double)

#undef SISE_INSTANTIATE_NUMCORE

}  // namespace sise

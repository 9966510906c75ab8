#pragma once

#include <cstddef>
#include <optional>

#include "sise/tensor.hpp"

namespace sise {

/// Corner-aligned bilinear resize of a 2-D map: output pixel i samples the
/// source at i * (h - 1) / (out_h - 1), so corners coincide. A 1-pixel output
/// axis samples source index 0.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& src, std::size_t out_h, std::size_t out_w);

/// (t - min) / (max - min); a constant tensor maps to all zeros.
template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& t);

/// Elementwise product. `b` may be H x W while `a` is H x W x C, in which case
/// `b` is broadcast over the channel axis.
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Histogram bin of a value in [0,1] for `bins` equal-width bins (values are clamped).
std::size_t unit_bin(double value, std::size_t bins);

/// Otsu threshold over `bins` equal-width bins on [0,1]. Returns the last bin
/// index of the low class, or nullopt when fewer than two bins are occupied.
template <typename T>
std::optional<std::size_t> otsu_bin_threshold(const Tensor<T>& map, std::size_t bins = 256);

/// Entries whose bin lies strictly above the Otsu threshold become 1, the rest 0.
/// A map occupying a single bin (e.g. constant) becomes all ones.
template <typename T>
Tensor<T> otsu_binarize(const Tensor<T>& map, std::size_t bins = 256);

}  // namespace sise

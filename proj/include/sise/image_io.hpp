#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "sise/tensor.hpp"

namespace sise {

/// Binary Netpbm I/O. Colour images are P6 (H x W x 3), maps are P5 (H x W);
/// maxval 255. Reading a P5 file yields a 3-channel image with the grey value
/// replicated. Samples are scaled to [0,1]; writing rounds clamp(v,0,1) * 255.
template <typename T>
Tensor<T> decode_pnm(const std::string& bytes, const std::string& origin);
template <typename T>
Tensor<T> read_image(const std::filesystem::path& path);

template <typename T>
std::string encode_pgm(const Tensor<T>& map);
template <typename T>
std::string encode_ppm(const Tensor<T>& image);

template <typename T>
void write_gray(const std::filesystem::path& path, const Tensor<T>& map);
template <typename T>
void write_rgb(const std::filesystem::path& path, const Tensor<T>& image);

/// Viridis colour for v in [0,1], piecewise linear between nine anchors.
std::array<double, 3> viridis(double v);

/// (1 - alpha) * image + alpha * viridis(map), per pixel.
template <typename T>
Tensor<T> overlay(const Tensor<T>& image, const Tensor<T>& map, double alpha = 0.5);

}  // namespace sise

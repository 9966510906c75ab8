#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "sise/eval.hpp"
#include "sise/model.hpp"

namespace sise::fixtures {

/// Shape envelope for randomly generated micro-CNNs.
struct RandomCnnConfig {
  std::size_t height = 12;
  std::size_t width = 12;
  std::size_t min_blocks = 1;
  std::size_t max_blocks = 3;
  std::size_t min_channels = 2;
  std::size_t max_channels = 6;
  std::size_t min_classes = 2;
  std::size_t max_classes = 5;
};

/// Blocks of conv -> relu -> (maxpool | avgpool), occasionally an extra
/// conv -> relu, then either global-average-pool + dense or a flattened dense
/// head. He-initialized weights, small random biases.
MicroCnn<float> random_micro_cnn(std::mt19937_64& rng, const RandomCnnConfig& config = {});

/// 24x24 input, three blocks with 16 / 32 / 256 maps, 10 classes.
MicroCnn<float> profile_cnn(std::uint64_t seed);

inline constexpr std::size_t kPlantedSize = 80;

/// Hand-built 80x80 two-class detector: class 0 fires on bright regions
/// through dedicated brightness channels; the remaining channels are random
/// texture filters with weak head weights.
MicroCnn<float> planted_square_cnn(std::uint64_t seed = 7);

inline constexpr std::size_t kPlantedClass = 0;

Tensor<float> random_image(std::mt19937_64& rng, std::size_t height, std::size_t width);

struct PlantedImage {
  Tensor<float> image;
  Box box;
};

/// Dim noise background in [0, 0.35] with a bright square (side between a
/// quarter and three eighths of the height, samples in [0.8, 1]) at a random
/// position.
PlantedImage planted_square_image(std::mt19937_64& rng, std::size_t height = kPlantedSize,
                                  std::size_t width = kPlantedSize);

/// Writes model.json, model.bin, images/img_NNN.ppm and annotations.json
/// for `count` planted-square images.
void write_planted_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed);

/// Profile model plus `count` noise images annotated with their argmax class
/// and a full-image box.
void write_profile_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed);

}  // namespace sise::fixtures

#include "sise/fixtures.hpp"

#include <cmath>
#include <cstdio>

#include "sise/aggregate.hpp"
#include "sise/image_io.hpp"
#include "sise/model_io.hpp"

namespace sise::fixtures {

namespace {

std::size_t uniform_count(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor<float> he_tensor(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor<float> t(std::move(shape));
  for (float& v : t.values()) v = dist(rng);
  return t;
}

Tensor<float> small_bias(std::mt19937_64& rng, std::size_t n, float scale) {
  std::normal_distribution<float> dist(0.0f, scale);
  Tensor<float> t({n});
  for (float& v : t.values()) v = dist(rng);
  return t;
}

class Builder {
 public:
  explicit Builder(std::string name, ImageShape input, std::size_t classes) {
    arch_.name = std::move(name);
    arch_.input = input;
    arch_.num_classes = classes;
  }

  void conv(std::size_t in, std::size_t out, Tensor<float> w, Tensor<float> b) {
    const bool has_bias = !b.empty();
    add({"conv" + std::to_string(++convs_), LayerKind::conv, in, out, has_bias}, {std::move(w), std::move(b)});
  }
  void relu() { add({"relu" + std::to_string(++relus_), LayerKind::relu}, {}); }
  void pool(LayerKind kind) {
    arch_.pooling.push_back(arch_.layers.size());
    add({"pool" + std::to_string(arch_.pooling.size()), kind}, {});
  }
  void gap() { add({"gap", LayerKind::global_avg_pool}, {}); }
  void dense(std::size_t in, std::size_t out, Tensor<float> w, Tensor<float> b) {
    const bool has_bias = !b.empty();
    add({"fc", LayerKind::dense, in, out, has_bias}, {std::move(w), std::move(b)});
  }
  MicroCnn<float> finish() {
    add({"prob", LayerKind::softmax}, {});
    return MicroCnn<float>(std::move(arch_), std::move(params_));
  }

 private:
  void add(LayerSpec spec, LayerParams<float> p) {
    arch_.layers.push_back(std::move(spec));
    params_.push_back(std::move(p));
  }

  Architecture arch_;
  std::vector<LayerParams<float>> params_;
  std::size_t convs_ = 0;
  std::size_t relus_ = 0;
};

void write_dataset(const std::filesystem::path& dir, const MicroCnn<float>& model,
                   const std::vector<Tensor<float>>& images, const std::vector<GroundTruthAnnotation>& annotations) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  save_model(model, dir / "model.json", dir / "model.bin");
  for (std::size_t i = 0; i < images.size(); ++i) write_rgb(dir / "images" / annotations[i].image_id, images[i]);
  write_text_file(dir / "annotations.json", format_annotations(annotations));
}

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%03zu.ppm", i);
  return buf;
}

}  // namespace

MicroCnn<float> random_micro_cnn(std::mt19937_64& rng, const RandomCnnConfig& config) {
  const std::size_t classes = uniform_count(rng, config.min_classes, config.max_classes);
  Builder b("random", {config.height, config.width, 3}, classes);
  std::size_t h = config.height;
  std::size_t w = config.width;
  std::size_t channels = 3;
  const std::size_t blocks = uniform_count(rng, config.min_blocks, config.max_blocks);
  for (std::size_t blk = 0; blk < blocks && h >= 2 && w >= 2; ++blk) {
    const std::size_t out = uniform_count(rng, config.min_channels, config.max_channels);
    b.conv(channels, out, he_tensor(rng, {out, channels, 3, 3}, channels * 9), small_bias(rng, out, 0.05f));
    b.relu();
    channels = out;
    if (uniform_count(rng, 0, 3) == 0) {
      b.conv(channels, channels, he_tensor(rng, {channels, channels, 3, 3}, channels * 9),
             small_bias(rng, channels, 0.05f));
      b.relu();
    }
    b.pool(uniform_count(rng, 0, 2) == 0 ? LayerKind::avgpool : LayerKind::maxpool);
    h /= 2;
    w /= 2;
  }
  std::size_t features = channels;
  if (h * w * channels <= 64 && uniform_count(rng, 0, 1) == 0) {
    features = h * w * channels;
  } else {
    b.gap();
  }
  b.dense(features, classes, he_tensor(rng, {classes, features}, features), small_bias(rng, classes, 0.05f));
  return b.finish();
}

MicroCnn<float> profile_cnn(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t kClasses = 10;
  Builder b("profile", {24, 24, 3}, kClasses);
  const std::size_t widths[] = {16, 32, 256};
  std::size_t channels = 3;
  for (const std::size_t out : widths) {
    b.conv(channels, out, he_tensor(rng, {out, channels, 3, 3}, channels * 9), small_bias(rng, out, 0.05f));
    b.relu();
    b.pool(LayerKind::maxpool);
    channels = out;
  }
  b.gap();
  b.dense(channels, kClasses, he_tensor(rng, {kClasses, channels}, channels), small_bias(rng, kClasses, 0.05f));
  return b.finish();
}

MicroCnn<float> planted_square_cnn(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Builder b("planted-square", {kPlantedSize, kPlantedSize, 3}, 2);
  constexpr std::size_t kBright = 2;  // leading channels of every block carry brightness
  const std::size_t widths[] = {6, 8, 16};
  const float kTextureBias[] = {0.5f, 0.3f, 0.3f};
  std::size_t channels = 3;
  for (std::size_t blk = 0; blk < 3; ++blk) {
    const std::size_t out = widths[blk];
    Tensor<float> w = he_tensor(rng, {out, channels, 3, 3}, channels * 9);
    Tensor<float> bias = small_bias(rng, out, 0.02f);
    // Texture channels only respond to strong contrast, i.e. around the square.
    for (std::size_t o = kBright; o < out; ++o) bias[o] -= kTextureBias[blk];
    for (std::size_t o = 0; o < kBright; ++o) {
      for (std::size_t i = 0; i < channels; ++i) {
        for (std::size_t t = 0; t < 9; ++t) w[(o * channels + i) * 9 + t] = 0.0f;
      }
    }
    if (blk == 0) {
      // Centre-tap and 3x3-mean brightness detectors: relu(mean - 0.55).
      for (std::size_t i = 0; i < 3; ++i) {
        w[(0 * 3 + i) * 9 + 4] = 1.0f / 3.0f;
        for (std::size_t t = 0; t < 9; ++t) w[(1 * 3 + i) * 9 + t] = 1.0f / 27.0f;
      }
      bias[0] = -0.55f;
      bias[1] = -0.55f;
    } else {
      // Later blocks pass each brightness channel through unchanged.
      for (std::size_t o = 0; o < kBright; ++o) {
        for (std::size_t i = 0; i < kBright; ++i) {
          for (std::size_t t = 0; t < 9; ++t) {
            w[(o * channels + i) * 9 + t] = o == i && t == 4 ? 1.0f : 0.0f;
          }
        }
        bias[o] = 0.0f;
      }
    }
    // Texture channels ignore the brightness channels of the previous block.
    if (blk > 0) {
      for (std::size_t o = kBright; o < out; ++o) {
        for (std::size_t i = 0; i < kBright; ++i) {
          for (std::size_t t = 0; t < 9; ++t) w[(o * channels + i) * 9 + t] = 0.0f;
        }
      }
    }
    b.conv(channels, out, std::move(w), std::move(bias));
    b.relu();
    b.pool(LayerKind::maxpool);
    channels = out;
  }
  b.gap();
  Tensor<float> head({2, channels}, 0.0f);
  std::uniform_real_distribution<float> weak(-0.1f, 0.1f);
  for (std::size_t k = 0; k < channels; ++k) {
    head.at(0, k) = k < kBright ? 40.0f - 10.0f * static_cast<float>(k) : weak(rng);
    head.at(1, k) = -head.at(0, k);
  }
  Tensor<float> head_bias({2}, std::vector<float>{-3.0f, 3.0f});
  b.dense(channels, 2, std::move(head), std::move(head_bias));
  return b.finish();
}

Tensor<float> random_image(std::mt19937_64& rng, std::size_t height, std::size_t width) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Tensor<float> image({height, width, 3});
  for (float& v : image.values()) v = dist(rng);
  return image;
}

PlantedImage planted_square_image(std::mt19937_64& rng, std::size_t height, std::size_t width) {
  std::uniform_real_distribution<float> background(0.0f, 0.35f);
  std::uniform_real_distribution<float> bright(0.8f, 1.0f);
  PlantedImage out{Tensor<float>({height, width, 3}), {}};
  for (float& v : out.image.values()) v = background(rng);
  const std::size_t side = uniform_count(rng, height / 4, height * 3 / 8);
  const std::size_t x0 = uniform_count(rng, 0, width - side);
  const std::size_t y0 = uniform_count(rng, 0, height - side);
  out.box = {x0, y0, x0 + side, y0 + side};
  for (std::size_t y = y0; y < y0 + side; ++y) {
    for (std::size_t x = x0; x < x0 + side; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = bright(rng);
    }
  }
  return out;
}

void write_planted_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor<float>> images;
  std::vector<GroundTruthAnnotation> annotations;
  for (std::size_t i = 0; i < count; ++i) {
    PlantedImage planted = planted_square_image(rng);
    annotations.push_back({image_name(i), kPlantedClass, {planted.box}});
    images.push_back(decode_pnm<float>(encode_ppm(planted.image), "planted"));
  }
  write_dataset(dir, planted_square_cnn(), images, annotations);
}

void write_profile_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const MicroCnn<float> model = profile_cnn(seed);
  std::vector<Tensor<float>> images;
  std::vector<GroundTruthAnnotation> annotations;
  for (std::size_t i = 0; i < count; ++i) {
    // Round-trip through 8-bit so the recorded argmax matches what readers see.
    images.push_back(decode_pnm<float>(encode_ppm(random_image(rng, 24, 24)), "profile"));
    annotations.push_back({image_name(i), argmax_class(model, images.back()), {Box{0, 0, 24, 24}}});
  }
  write_dataset(dir, model, images, annotations);
}

}  // namespace sise::fixtures

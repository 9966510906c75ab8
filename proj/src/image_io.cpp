#include "sise/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "sise/errors.hpp"
#include "sise/model_io.hpp"

namespace sise {

namespace {

class HeaderParser {
 public:
  HeaderParser(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_++] - '0');
      if (++digits > 9) fail("header number too large");
    }
    if (digits == 0) fail("malformed header");
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) fail("malformed header");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const { throw IoError(origin_ + ": " + what); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 2;
};

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

template <typename T>
std::string header_and_raster(const char* magic, const Tensor<T>& t, std::size_t h, std::size_t w) {
  std::string out = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + t.size());
  for (const T v : t.values()) out.push_back(static_cast<char>(quantize(static_cast<double>(v))));
  return out;
}

}  // namespace

template <typename T>
Tensor<T> decode_pnm(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError(origin + ": not a binary PGM/PPM file");
  }
  const bool colour = bytes[1] == '6';
  HeaderParser header(bytes, origin);
  const std::size_t w = header.number();
  const std::size_t h = header.number();
  const std::size_t maxval = header.number();
  if (w == 0 || h == 0) header.fail("zero image size");
  if (maxval == 0 || maxval > 255) header.fail("only 8-bit samples (maxval <= 255) are supported");
  const std::size_t start = header.raster_start();
  const std::size_t samples = h * w * (colour ? 3 : 1);
  if (bytes.size() - start < samples) header.fail("truncated raster");

  Tensor<T> image({h, w, 3});
  const auto scale = static_cast<double>(maxval);
  for (std::size_t px = 0; px < h * w; ++px) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t src = colour ? px * 3 + ch : px;
      image[px * 3 + ch] = static_cast<T>(static_cast<unsigned char>(bytes[start + src]) / scale);
    }
  }
  return image;
}

template <typename T>
Tensor<T> read_image(const std::filesystem::path& path) {
  return decode_pnm<T>(read_text_file(path), path.string());
}

template <typename T>
std::string encode_pgm(const Tensor<T>& map) {
  if (map.rank() != 2) throw ShapeMismatch("PGM output needs an H x W map, got " + shape_to_string(map.shape()));
  return header_and_raster("P5", map, map.dim(0), map.dim(1));
}

template <typename T>
std::string encode_ppm(const Tensor<T>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeMismatch("PPM output needs an H x W x 3 image, got " + shape_to_string(image.shape()));
  }
  return header_and_raster("P6", image, image.dim(0), image.dim(1));
}

template <typename T>
void write_gray(const std::filesystem::path& path, const Tensor<T>& map) {
  write_text_file(path, encode_pgm(map));
}

template <typename T>
void write_rgb(const std::filesystem::path& path, const Tensor<T>& image) {
  write_text_file(path, encode_ppm(image));
}

std::array<double, 3> viridis(double v) {
  static constexpr std::array<std::array<double, 3>, 9> kAnchors = {{
      {0.267004, 0.004874, 0.329415},
      {0.282623, 0.140926, 0.457517},
      {0.253935, 0.265254, 0.529983},
      {0.206756, 0.371758, 0.553117},
      {0.163625, 0.471133, 0.558148},
      {0.127568, 0.566949, 0.550556},
      {0.134692, 0.658636, 0.517649},
      {0.266941, 0.748751, 0.440573},
      {0.993248, 0.906157, 0.143936},
  }};
  const double pos = std::clamp(v, 0.0, 1.0) * static_cast<double>(kAnchors.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), kAnchors.size() - 2);
  const double frac = pos - static_cast<double>(lo);
  std::array<double, 3> rgb{};
  for (std::size_t ch = 0; ch < 3; ++ch) rgb[ch] = (1.0 - frac) * kAnchors[lo][ch] + frac * kAnchors[lo + 1][ch];
  return rgb;
}

template <typename T>
Tensor<T> overlay(const Tensor<T>& image, const Tensor<T>& map, double alpha) {
  if (image.rank() != 3 || image.dim(2) != 3 || map.rank() != 2 || map.dim(0) != image.dim(0) ||
      map.dim(1) != image.dim(1)) {
    throw ShapeMismatch("overlay: image " + shape_to_string(image.shape()) + " and map " +
                        shape_to_string(map.shape()) + " disagree");
  }
  Tensor<T> out(image.shape());
  for (std::size_t px = 0; px < map.size(); ++px) {
    const auto rgb = viridis(static_cast<double>(map[px]));
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out[px * 3 + ch] = static_cast<T>((1.0 - alpha) * static_cast<double>(image[px * 3 + ch]) + alpha * rgb[ch]);
    }
  }
  return out;
}

#define SISE_INSTANTIATE_IMAGE_IO(T)                                                \
  template Tensor<T> decode_pnm<T>(const std::string&, const std::string&);       \
  template Tensor<T> read_image<T>(const std::filesystem::path&);                 \
  template std::string encode_pgm(const Tensor<T>&);                               \
  template std::string encode_ppm(const Tensor<T>&);                               \
  template void write_gray(const std::filesystem::path&, const Tensor<T>&);       \
  template void write_rgb(const std::filesystem::path&, const Tensor<T>&);        \
  template Tensor<T> overlay(const Tensor<T>&, const Tensor<T>&, double);

SISE_INSTANTIATE_IMAGE_IO(float)
SISE_INSTANTIATE_IMAGE_IO(double)

#undef SISE_INSTANTIATE_IMAGE_IO

}  // namespace sise

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sise/numcore.hpp"

using sise::Tensor;

TEST_CASE("bilinear_resize: identity, constant extension, corner-aligned midpoint") {
  const Tensor<float> two({2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(sise::bilinear_resize(two, 2, 2) == two);

  const Tensor<float> one({1, 1}, std::vector<float>{0.7f});
  const auto big = sise::bilinear_resize(one, 5, 3);
  CHECK(big.shape() == sise::Shape{5, 3});
  for (float v : big.values()) CHECK(v == 0.7f);

  const Tensor<double> corner({2, 2}, std::vector<double>{0, 0, 0, 1});
  const auto three = sise::bilinear_resize(corner, 3, 3);
  CHECK(three.at(1, 1) == doctest::Approx(0.25));
  CHECK(three.at(0, 0) == 0.0);
  CHECK(three.at(2, 2) == 1.0);
}

TEST_CASE("bilinear_resize keeps corners when upsampling") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> src({3, 5});
  for (double& v : src.values()) v = u(rng);
  const auto out = sise::bilinear_resize(src, 11, 17);
  CHECK(out.at(0, 0) == src.at(0, 0));
  CHECK(out.at(0, 16) == src.at(0, 4));
  CHECK(out.at(10, 0) == src.at(2, 0));
  CHECK(out.at(10, 16) == src.at(2, 4));
}

TEST_CASE("bilinear_resize rejects zero-sized targets and non-2D input") {
  const Tensor<float> t({2, 2});
  CHECK_THROWS_AS(sise::bilinear_resize(t, 0, 3), sise::InvalidArgument);
  CHECK_THROWS_AS(sise::bilinear_resize(t, 3, 0), sise::InvalidArgument);
  CHECK_THROWS_AS(sise::bilinear_resize(Tensor<float>({2, 2, 3}), 4, 4), sise::ShapeMismatch);
}

TEST_CASE("minmax_normalize") {
  const auto a = sise::minmax_normalize(Tensor<double>({3}, std::vector<double>{2, 4, 6}));
  CHECK(a[0] == 0.0);
  CHECK(a[1] == doctest::Approx(0.5));
  CHECK(a[2] == 1.0);

  const auto b = sise::minmax_normalize(Tensor<double>({3}, std::vector<double>{-1, 0, 3}));
  CHECK(b[1] == doctest::Approx(0.25));

  const auto c = sise::minmax_normalize(Tensor<float>({2, 3}, 5.0f));
  for (float v : c.values()) CHECK(v == 0.0f);
}

TEST_CASE("minmax_normalize output stays in [0,1] with exact extremes") {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> n(0, 100);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<float> t({7, 9});
    for (float& v : t.values()) v = n(rng);
    const auto out = sise::minmax_normalize(t);
    float lo = 2, hi = -1;
    for (float v : out.values()) {
      CHECK(std::isfinite(v));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
  }
}

TEST_CASE("hadamard") {
  const Tensor<float> a({2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor<float> b({2, 2}, std::vector<float>{0, 1, 1, 0});
  CHECK(sise::hadamard(a, b) == Tensor<float>({2, 2}, std::vector<float>{0, 2, 3, 0}));
  CHECK(sise::hadamard(a, Tensor<float>({2, 2}, 1.0f)) == a);
  CHECK(sise::hadamard(a, Tensor<float>({2, 2}, 0.0f)) == Tensor<float>({2, 2}, 0.0f));
  CHECK(sise::hadamard(a, b) == sise::hadamard(b, a));

  Tensor<float> img({2, 2, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i + 1);
  const auto masked = sise::hadamard(img, b);
  CHECK(masked.at(0, 0, 2) == 0.0f);
  CHECK(masked.at(0, 1, 0) == img.at(0, 1, 0));
  CHECK(masked.at(1, 1, 1) == 0.0f);

  CHECK_THROWS_AS(sise::hadamard(a, Tensor<float>({3, 2})), sise::ShapeMismatch);
}

TEST_CASE("otsu_binarize degenerate and bimodal cases") {
  const auto constant = sise::otsu_binarize(Tensor<float>({4, 4}, 0.5f));
  for (float v : constant.values()) CHECK(v == 1.0f);

  Tensor<float> half({4, 4});
  for (std::size_t i = 0; i < half.size(); ++i) half[i] = i % 2 ? 1.0f : 0.0f;
  const auto bin = sise::otsu_binarize(half);
  for (std::size_t i = 0; i < half.size(); ++i) CHECK(bin[i] == half[i]);
}

TEST_CASE("otsu_binarize matches exhaustive threshold search on random bimodal maps") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> low(0.2, 0.1), high(0.8, 0.1);  // variance 0.01
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 40; ++trial) {
    Tensor<double> map({16, 16});
    std::vector<double> values;
    for (double& v : map.values()) {
      v = std::clamp(coin(rng) ? high(rng) : low(rng), 0.0, 1.0);
      values.push_back(v);
    }
    const auto got = sise::otsu_binarize(map, 256);
    const auto want = oracle::brute_force_otsu_mask(values, 256);
    for (std::size_t i = 0; i < values.size(); ++i) REQUIRE(static_cast<int>(got[i]) == want[i]);
  }
}

TEST_CASE("otsu_binarize partition is invariant under increasing affine rescaling") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 255);
  for (int trial = 0; trial < 30; ++trial) {
    // Values sit on bin centres so rescaling cannot push one across a bin edge.
    Tensor<double> map({8, 8});
    map[0] = 0.5 / 256.0;
    map[1] = 255.5 / 256.0;
    for (std::size_t i = 2; i < map.size(); ++i) map[i] = (level(rng) + 0.5) / 256.0;
    Tensor<double> scaled = map;
    for (double& v : scaled.values()) v = 4.0 * v + 3.0;
    const auto a = sise::otsu_binarize(sise::minmax_normalize(map));
    const auto b = sise::otsu_binarize(sise::minmax_normalize(scaled));
    CHECK(a == b);
  }
}

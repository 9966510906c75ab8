#include <doctest.h>

#include <random>

#include "sise/aggregate.hpp"
#include "sise/eval.hpp"
#include "sise/fixtures.hpp"
#include "sise/log.hpp"
#include "sise/numcore.hpp"
#include "test_models.hpp"

using sise::Tensor;

namespace {

Tensor<double> random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> m({h, w});
  for (double& v : m.values()) v = u(rng);
  return sise::minmax_normalize(m);
}

sise::AttributionMaskSet<double> mask_set(std::vector<Tensor<double>> masks) {
  sise::AttributionMaskSet<double> set;
  set.masks = std::move(masks);
  for (std::size_t i = 0; i < set.masks.size(); ++i) set.kept_indices.push_back(i);
  return set;
}

sise::LayerVisualizationMap<double> layer_map(Tensor<double> map) {
  return {0, std::move(map), 1};
}

}  // namespace

TEST_CASE("score_masks: single and duplicated masks reduce to the normalized mask") {
  std::mt19937_64 rng(20);
  const auto model = testmodels::conv_avgpool_gap(rng, 3, 2, testmodels::selector_head(2, 3, 0, 1), 6, 6);
  const auto image = testmodels::random_image<double>(rng, model.input_shape());
  const auto m = random_mask(rng, 6, 6);
  const auto single = sise::score_masks(model, image, 0, mask_set({m}));
  CHECK(single.num_forwards == 1);
  const auto expected = sise::minmax_normalize(m);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(single.map[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  const auto twice = sise::score_masks(model, image, 0, mask_set({m, m}));
  CHECK(twice.num_forwards == 2);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(twice.map[i] == doctest::Approx(single.map[i]).epsilon(1e-12));

  const auto empty = sise::score_masks(model, image, 0, mask_set({}));
  CHECK(empty.num_forwards == 0);
  for (double v : empty.map.values()) CHECK(v == 0.0);
}

TEST_CASE("score_masks: three masks match an unbatched recomputation") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 1);
  Tensor<double> head({3, 4});
  for (double& v : head.values()) v = n(rng);
  const auto model = testmodels::conv_avgpool_gap(rng, 4, 3, head, 6, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto image = testmodels::random_image<double>(rng, model.input_shape());
    std::vector<Tensor<double>> masks = {random_mask(rng, 6, 6), random_mask(rng, 6, 6), random_mask(rng, 6, 6)};
    const std::size_t c = trial % 3;
    std::vector<double> acc(36, 0.0);
    for (const auto& m : masks) {
      Tensor<double> masked = image;
      for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t x = 0; x < 6; ++x) {
          for (std::size_t ch = 0; ch < 3; ++ch) masked.at(y, x, ch) = image.at(y, x, ch) * m.at(y, x);
        }
      }
      const double s = model.forward_capture(masked).probs[c];
      for (std::size_t i = 0; i < 36; ++i) acc[i] += s * m[i] / 3.0;
    }
    const double lo = *std::min_element(acc.begin(), acc.end());
    const double hi = *std::max_element(acc.begin(), acc.end());
    const auto got = sise::score_masks(model, image, c, mask_set(masks), 3);
    for (std::size_t i = 0; i < 36; ++i) CHECK(got.map[i] == doctest::Approx((acc[i] - lo) / (hi - lo)).epsilon(1e-9));
  }
}

TEST_CASE("fuse cascade") {
  std::mt19937_64 rng(22);
  const auto v1 = random_mask(rng, 8, 8);
  SUBCASE("single layer passes through") {
    const auto y = sise::fuse<double>({layer_map(v1)});
    CHECK(y == v1);
  }
  SUBCASE("constant-one deep map gates nothing") {
    const Tensor<double> ones({8, 8}, 1.0);
    const auto y = sise::fuse<double>({layer_map(v1), layer_map(ones)});
    const auto expected = sise::minmax_normalize(sise::add(v1, ones));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  SUBCASE("zero outside the deep map's support") {
    Tensor<double> v2({8, 8}, 0.0);
    for (std::size_t y = 2; y < 5; ++y) {
      for (std::size_t x = 3; x < 7; ++x) v2.at(y, x) = 0.5 + 0.1 * static_cast<double>(x);
    }
    const auto fused = sise::fuse<double>({layer_map(v1), layer_map(sise::minmax_normalize(v2))});
    for (std::size_t y = 0; y < 8; ++y) {
      for (std::size_t x = 0; x < 8; ++x) {
        if (v2.at(y, x) == 0.0) CHECK(fused.at(y, x) == 0.0);
      }
    }
  }
  SUBCASE("all-zero layers are skipped, empty input throws") {
    const Tensor<double> zeros({8, 8}, 0.0);
    CHECK(sise::fuse<double>({layer_map(zeros), layer_map(v1)}) == v1);
    CHECK(sise::fuse<double>({layer_map(zeros)}) == zeros);
    CHECK_THROWS_AS(sise::fuse<double>({}), sise::InvalidArgument);
  }
}

TEST_CASE("explain: equal positive gradients give identical maps for both policies") {
  std::mt19937_64 rng(23);
  Tensor<double> head({2, 4}, 0.0);
  head.at(0, 1) = 0.7;
  head.at(0, 3) = 0.7;
  head.at(1, 0) = 1.0;
  const auto model = testmodels::conv_avgpool_gap(rng, 4, 2, head, 6, 6);
  const auto image = testmodels::random_image<double>(rng, model.input_shape());
  const auto a = sise::explain(model, image, 0, sise::FixedThreshold{0.0});
  const auto b = sise::explain(model, image, 0, sise::AdaptiveOtsu{});
  CHECK(a.layers[0].kept_indices == std::vector<std::size_t>{1, 3});
  CHECK(a.layers[0].kept_indices == b.layers[0].kept_indices);
  CHECK(a.map == b.map);
  CHECK(a.method == "sise");
  CHECK(b.method == "ada-sise");
  CHECK(a.policy == "fixed(0)");
}

TEST_CASE("explain: accounting, range, subset and determinism across worker counts") {
  std::mt19937_64 rng(24);
  sise::set_log_level(sise::LogLevel::quiet);
  for (int trial = 0; trial < 25; ++trial) {
    const auto model = sise::fixtures::random_micro_cnn(rng);
    const auto image = testmodels::random_image<float>(rng, model.input_shape());
    const std::size_t c = rng() % model.num_classes();
    const auto base = sise::explain(model, image, c, sise::FixedThreshold{0.0});
    const auto ada = sise::explain(model, image, c, sise::AdaptiveOtsu{});
    const auto ada4 = sise::explain(model, image, c, sise::AdaptiveOtsu{}, {4});
    const auto base4 = sise::explain(model, image, c, sise::FixedThreshold{0.0}, {4});
    CHECK(ada.map == ada4.map);
    CHECK(base.map == base4.map);
    for (const auto* e : {&base, &ada}) {
      std::size_t total = 0;
      for (const auto& l : e->layers) {
        total += l.kept_indices.size();
        CHECK(l.num_forwards == l.kept);
        CHECK(l.kept <= l.positive_count);
      }
      CHECK(e->num_forwards == total);
      CHECK(e->map.shape() == sise::Shape{model.input_shape().height, model.input_shape().width});
      for (float v : e->map.values()) CHECK((v >= 0.0f && v <= 1.0f));
      CHECK(e->timings.total() >= 0.0);
    }
    CHECK(ada.num_forwards <= base.num_forwards);
  }
  sise::set_log_level(sise::LogLevel::warning);
}

TEST_CASE("explain concentrates on the planted square") {
  const auto model = sise::fixtures::planted_square_cnn();
  std::mt19937_64 rng(25);
  double total = 0;
  const int n = 10;
  for (int i = 0; i < n; ++i) {
    const auto planted = sise::fixtures::planted_square_image(rng);
    const auto e = sise::explain(model, planted.image, sise::fixtures::kPlantedClass, sise::AdaptiveOtsu{});
    total += sise::ebpg(e.map, std::vector<sise::Box>{planted.box});
  }
  CHECK(total / n > 50.0);
}

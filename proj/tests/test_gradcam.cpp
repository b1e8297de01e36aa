#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "radiodx/errors.hpp"
#include "radiodx/gradcam.hpp"
#include "radiodx/gradcheck.hpp"

using namespace radiodx;

namespace {

// 1x1 conv with weight 1 followed by an averaging dense layer: the map is
// ReLU(input) up to normalization.
Model averaging_net(std::size_t h, std::size_t w) {
  Model m({1, h, w},
          {LayerSpec::conv("conv", 1, 1, 1), LayerSpec::flatten("flatten"),
           LayerSpec::dense("avg", h * w, 1), LayerSpec::act("sigmoid", ops::Activation::sigmoid)},
          0);
  m.layers()[0].weight.value.fill(1.0f);
  m.layers()[2].weight.value.fill(1.0f / static_cast<float>(h * w));
  return m;
}

}  // namespace

TEST_CASE("hand-built averaging network") {
  const Tensor x({1, 2, 3}, {1.0f, -2.0f, 4.0f, 0.0f, 2.0f, -1.0f});
  const Heatmap map = compute_gradcam(averaging_net(2, 3), x);
  REQUIRE_FALSE(map.all_zero);
  const std::vector<float> expect = {0.25f, 0.0f, 1.0f, 0.0f, 0.5f, 0.0f};
  for (std::size_t i = 0; i < 6; ++i) CHECK(map.values[i] == doctest::Approx(expect[i]).epsilon(1e-6));
  CHECK(*std::max_element(map.values.begin(), map.values.end()) == 1.0f);

  // Scaling the input scales the raw map; the normalized map is unchanged.
  Tensor scaled = x;
  for (auto& v : scaled.data()) v *= 7.0f;
  const Heatmap again = compute_gradcam(averaging_net(2, 3), scaled);
  for (std::size_t i = 0; i < 6; ++i) CHECK(again.values[i] == doctest::Approx(map.values[i]).epsilon(1e-6));
}

TEST_CASE("degenerate maps are flagged") {
  const Tensor negative({1, 2, 2}, {-1.0f, -2.0f, -3.0f, -4.0f});
  CHECK(compute_gradcam(averaging_net(2, 2), negative).all_zero);

  Model m = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 1, 16);
  for (auto& np : named_parameters(m))
    if (np.name.starts_with("head.")) np.param->value.fill(0.0f);
  const Heatmap map = compute_gradcam(m, random_tensor64({3, 16, 16}, 2).cast<float>());
  CHECK(map.all_zero);
  CHECK(map.width == 16);
  CHECK(std::all_of(map.values.begin(), map.values.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("target layer selection") {
  const Model m = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 1, 16);
  CHECK(m.layers()[gradcam_target(m)].spec.name == "backbone.block2_conv1");
  CHECK(m.layers()[gradcam_target(m, "backbone.block1_conv1")].spec.name == "backbone.block1_conv1");
  CHECK_THROWS_AS(gradcam_target(m, "head.dense1"), ArgumentError);
  CHECK_THROWS_AS(gradcam_target(m, "backbone.*"), ArgumentError);
  CHECK_THROWS_AS(gradcam_target(m, "missing"), ArgumentError);

  const Heatmap map = compute_gradcam(m, random_tensor64({3, 16, 16}, 3, 0.0, 1.0).cast<float>());
  if (!map.all_zero) CHECK(*std::max_element(map.values.begin(), map.values.end()) == 1.0f);
}

TEST_CASE("positive rescaling of the last dense layer leaves the map unchanged") {
  const Model base = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 6, 16);
  const Tensor x = random_tensor64({3, 16, 16}, 8, 0.0, 1.0).cast<float>();
  const Heatmap ref = compute_gradcam(base, x);
  for (const float scale : {0.5f, 2.0f, 10.0f}) {
    Model m = base;
    for (float& w : m.layers()[m.find("head.dense2").value()].weight.value.data()) w *= scale;
    const Heatmap map = compute_gradcam(m, x);
    CHECK(map.all_zero == ref.all_zero);
    double worst = 0;
    for (std::size_t i = 0; i < map.values.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(map.values[i] - ref.values[i])));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("colormap and overlay") {
  const auto purple = heat_color(0.0), green = heat_color(0.5), yellow = heat_color(1.0);
  for (int c = 0; c < 3; ++c) {
    CHECK(purple[c] == kHeatPurple[c]);
    CHECK(green[c] == kHeatGreen[c]);
    CHECK(yellow[c] == kHeatYellow[c]);
    CHECK(heat_color(0.25)[c] == doctest::Approx((kHeatPurple[c] + kHeatGreen[c]) / 2.0));
  }

  const Raster base(4, 3, 1, 128);
  Heatmap full{4, 3, std::vector<float>(12, 1.0f), false};
  CHECK(colorize_overlay(full, base, {0.0}) == Raster(4, 3, 3, 128));
  const Raster all_yellow = colorize_overlay(full, base, {1.0});
  for (std::size_t i = 0; i < 12; ++i)
    for (int c = 0; c < 3; ++c) CHECK(all_yellow.samples[3 * i + c] == kHeatYellow[c]);

  // 0.5*128 + 0.5*(53,183,121) = (90.5, 155.5, 124.5), halves to even.
  Heatmap mid{4, 3, std::vector<float>(12, 0.5f), false};
  const Raster blend = colorize_overlay(mid, base, {0.5});
  CHECK(blend.samples[0] == 90);
  CHECK(blend.samples[1] == 156);
  CHECK(blend.samples[2] == 124);

  // Heatmap at model resolution is stretched to the base.
  const Raster big = colorize_overlay(full, Raster(40, 30, 3, 0), {1.0});
  CHECK(big.width == 40);
  CHECK(big.at(39, 29, 0) == kHeatYellow[0]);
  CHECK_THROWS_AS(colorize_overlay(full, base, {1.5}), ArgumentError);

  CHECK(heatmap_raster(mid).samples == std::vector<std::uint8_t>(12, 128));
}

#include <doctest.h>

#include <cmath>
#include <limits>

#include "radiodx/errors.hpp"
#include "radiodx/gradcheck.hpp"
#include "radiodx/ops.hpp"

using namespace radiodx;
using namespace radiodx::ops;

TEST_CASE("shape helpers") {
  CHECK(to_string(Shape{1024, 25088}) == "(1024,25088)");
  CHECK(checked_volume({2, 3, 4}) == 24);
  CHECK_THROWS_AS(checked_volume({}), ShapeError);
  CHECK_THROWS_AS(checked_volume({3, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);

  Tensor t({2, 3});
  t.at(1, 2) = 5.0f;
  CHECK(t[5] == 5.0f);
  t.reshape({3, 2});
  CHECK(t.at(2, 1) == 5.0f);
  CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
}

TEST_CASE("conv2d forward") {
  SUBCASE("1x1 identity kernel") {
    const Tensor x = random_tensor64({2, 5, 4}, 3).cast<float>();
    Tensor w({2, 2, 1, 1});
    w[0] = 1.0f;
    w[3] = 1.0f;
    CHECK(conv2d(x, w, Tensor({2}), Padding::same) == x);
    CHECK(conv2d(x, w, Tensor({2}), Padding::valid) == x);
  }
  SUBCASE("zero weights") {
    const Tensor x = random_tensor64({3, 4, 4}, 4).cast<float>();
    const Tensor y = conv2d(x, Tensor({5, 3, 3, 3}), Tensor({5}), Padding::same);
    CHECK(y.shape() == Shape{5, 4, 4});
    CHECK(y == Tensor({5, 4, 4}));
  }
  SUBCASE("hand-computed valid 2x2 kernel") {
    const Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor w({1, 1, 2, 2}, {1, 0, 0, 1});
    const Tensor y = conv2d(x, w, Tensor({1}), Padding::valid);
    CHECK(y == Tensor({1, 2, 2}, {6, 8, 12, 14}));
  }
  SUBCASE("same padding reads zeros at the border") {
    const Tensor x({1, 2, 2}, {1, 2, 3, 4});
    const Tensor w({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
    const Tensor y = conv2d(x, w, Tensor({1}, {0.5f}), Padding::same);
    CHECK(y == Tensor({1, 2, 2}, {10.5f, 10.5f, 10.5f, 10.5f}));
  }
  SUBCASE("shape errors name both shapes") {
    const Tensor x({2, 4, 4});
    try {
      conv2d(x, Tensor({1, 3, 3, 3}), Tensor({1}), Padding::same);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(2,4,4)") != std::string::npos);
      CHECK(msg.find("(1,3,3,3)") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 3, 3}), Tensor({2}), Padding::same), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 5, 5}), Tensor({1}), Padding::valid), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 2, 2}), Tensor({1}), Padding::same), ShapeError);
  }
}

TEST_CASE("maxpool2") {
  SUBCASE("constant input") {
    const Tensor x({2, 4, 6}, std::vector<float>(48, 3.5f));
    const auto r = maxpool2(x);
    CHECK(r.output == Tensor({2, 2, 3}, std::vector<float>(12, 3.5f)));
  }
  SUBCASE("window max and backward routing") {
    const Tensor x({1, 2, 2}, {1, 2, 3, 4});
    const auto r = maxpool2(x);
    CHECK(r.output == Tensor({1, 1, 1}, {4}));
    const Tensor g = maxpool2_backward(x.shape(), r.argmax, Tensor({1, 1, 1}, {1}));
    CHECK(g == Tensor({1, 2, 2}, {0, 0, 0, 1}));
  }
  SUBCASE("ties go to the first element in row-major order") {
    const Tensor x({1, 2, 2}, {7, 7, 7, 7});
    const auto r = maxpool2(x);
    const Tensor g = maxpool2_backward(x.shape(), r.argmax, Tensor({1, 1, 1}, {2}));
    CHECK(g == Tensor({1, 2, 2}, {2, 0, 0, 0}));
  }
  SUBCASE("backward conserves upstream mass per window") {
    const Tensor64 x = random_tensor64({3, 6, 4}, 21);
    const auto r = maxpool2(x);
    const Tensor64 up = random_tensor64(r.output.shape(), 22);
    const Tensor64 g = maxpool2_backward(x.shape(), r.argmax, up);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t xx = 0; xx < 2; ++xx) {
          const double mass = g.at(c, 2 * y, 2 * xx) + g.at(c, 2 * y, 2 * xx + 1) +
                              g.at(c, 2 * y + 1, 2 * xx) + g.at(c, 2 * y + 1, 2 * xx + 1);
          CHECK(mass == up.at(c, y, xx));
        }
  }
  SUBCASE("odd dims rejected") {
    CHECK_THROWS_AS(maxpool2(Tensor({1, 3, 4})), ShapeError);
    CHECK_THROWS_AS(maxpool2(Tensor({1, 4, 5})), ShapeError);
  }
}

TEST_CASE("dense") {
  CHECK(dense(Tensor({2}, {1, 1}), Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, {1, 1})) ==
        Tensor({2}, {4, 8}));
  const Tensor x({3}, {0.25f, -2.0f, 9.0f});
  CHECK(dense(x, Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3})) == x);
  CHECK_THROWS_AS(dense(x, Tensor({2, 4}), Tensor({2})), ShapeError);
  CHECK_THROWS_AS(dense(x, Tensor({2, 3}), Tensor({3})), ShapeError);
}

TEST_CASE("activations") {
  CHECK(activation(Activation::relu, Tensor({3}, {-1, 0, 2})) == Tensor({3}, {0, 0, 2}));
  CHECK(sigmoid(0.0f) == 0.5f);
  CHECK(sigmoid(500.0f) == 1.0f);
  CHECK(sigmoid(-500.0f) == 0.0f);
  CHECK(sigmoid(500.0) == 1.0);
  CHECK(sigmoid(-500.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-500.0)));

  const Tensor x({3}, {-1, 0, 2});
  const Tensor y = activation(Activation::relu, x);
  const Tensor g = activation_backward(Activation::relu, x, y, Tensor({3}, {1, 1, 1}));
  CHECK(g == Tensor({3}, {0, 0, 1}));  // zero subgradient at the kink

  CHECK(parse_activation("sigmoid") == Activation::sigmoid);
  CHECK_THROWS_AS(parse_activation("tanh"), ArgumentError);
  CHECK(parse_padding("valid") == Padding::valid);
  CHECK_THROWS_AS(parse_padding("full"), ArgumentError);
}

TEST_CASE("binary cross-entropy") {
  CHECK(bce_loss(0.5, 1).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(0.25, 0).loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(bce_loss(0.25, 0).gradient == doctest::Approx(1.0 / 0.75).epsilon(1e-12));
  CHECK(bce_loss(0.5, 1).gradient == doctest::Approx(-2.0).epsilon(1e-12));
  // A perfect prediction costs at most -ln(1 - eps).
  const double bound = -std::log(1.0 - kBceEpsilon) * (1 + 1e-9);
  CHECK(bce_loss(1.0, 1).loss <= bound);
  CHECK(bce_loss(0.0, 0).loss <= bound);
  CHECK(std::isfinite(bce_loss(0.0, 1).loss));
  CHECK(std::isfinite(bce_loss(1.0f, 0).loss));
  CHECK_THROWS_AS(bce_loss(0.5, 2), ArgumentError);
}

namespace {

// Weighted sum against a fixed random projection turns any tensor-valued op
// into a scalar whose gradient wrt the output is the projection itself.
Tensor64 projection(const Shape& shape, std::uint64_t seed) {
  return random_tensor64(shape, seed ^ 0xABCDEFull);
}

}  // namespace

TEST_CASE("finite differences: dense is exact to rounding") {
  const Tensor64 x = random_tensor64({4}, 1), w = random_tensor64({8, 4}, 2),
                 b = random_tensor64({8}, 3);
  const Tensor64 r = projection({8}, 4);
  const auto g = dense_backward(x, w, r);
  const ScalarFunction fn = [&](const std::vector<Tensor64>& p) {
    return dot(dense(p[0], p[1], p[2]), r);
  };
  CHECK(finite_diff_check(fn, {x, w, b}, {g.input, g.weights, g.bias}, 1e-3) < 1e-6);
}

TEST_CASE("finite differences: conv2d on a 2x4x4 probe") {
  for (const Padding pad : {Padding::same, Padding::valid}) {
    const Tensor64 x = random_tensor64({2, 4, 4}, 11), w = random_tensor64({3, 2, 3, 3}, 12),
                   b = random_tensor64({3}, 13);
    const Tensor64 y = conv2d(x, w, b, pad);
    const Tensor64 r = projection(y.shape(), 14);
    const auto g = conv2d_backward(x, w, pad, r);
    const ScalarFunction fn = [&](const std::vector<Tensor64>& p) {
      return dot(conv2d(p[0], p[1], p[2], pad), r);
    };
    CHECK(finite_diff_check(fn, {x, w, b}, {g.input, g.weights, g.bias}, 1e-3) < 1e-4);
  }
}

TEST_CASE("finite_diff_check rejects bad arguments and detects wrong gradients") {
  const Tensor64 x = random_tensor64({3}, 5);
  const ScalarFunction sq = [](const std::vector<Tensor64>& p) { return dot(p[0], p[0]); };
  Tensor64 good = x;
  for (auto& v : good.data()) v *= 2.0;
  CHECK(finite_diff_check(sq, {x}, {good}, 1e-3) < 1e-8);
  CHECK(finite_diff_check(sq, {x}, {x}, 1e-3) > 1e-2);
  CHECK_THROWS_AS(finite_diff_check(sq, {x}, {good}, 1e-6), ArgumentError);
  CHECK_THROWS_AS(finite_diff_check(sq, {x}, {Tensor64({4})}, 1e-3), ShapeError);
}

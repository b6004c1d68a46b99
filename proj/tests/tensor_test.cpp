#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "d2f/ops.hpp"

using namespace d2f;

TEST(Tensor, ConstantFill) {
  Tensor z(Shape{2, 2}, 0.0f);
  EXPECT_EQ(z.values().size(), 4u);
  for (float v : z.values()) EXPECT_EQ(v, 0.0f);
  Tensor c(Shape{3}, 1.5f);
  EXPECT_EQ(c, Tensor(Shape{3}, std::vector<float>{1.5f, 1.5f, 1.5f}));
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{3}, std::vector<float>{1, 2}), ShapeError);
  EXPECT_THROW(Tensor(Shape{1}, std::vector<float>{NAN}), DomainError);
}

TEST(Tensor, SeededUniformIsReproducible) {
  auto a = Tensor::uniform({4}, 7, -1, 1);
  auto b = Tensor::uniform({4}, 7, -1, 1);
  EXPECT_TRUE(ops::bitwise_equal(a, b));
  for (float v : a.values()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_FALSE(ops::bitwise_equal(a, Tensor::uniform({4}, 8, -1, 1)));
}

TEST(Elementwise, Definitions) {
  EXPECT_EQ(ops::sigmoid(Tensor::scalar(0.0f)).item(), 0.5f);
  Tensor x(Shape{2}, std::vector<float>{-3, 3});
  auto r = ops::relu(x);
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 3.0f);
  auto s = ops::abs(ops::mul(ops::sin(Tensor::scalar(static_cast<float>(std::numbers::pi / 2))), 4.0f));
  EXPECT_NEAR(s.item(), 4.0f, 1e-6);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(ops::add(Tensor(Shape{2}), Tensor(Shape{3})), ShapeError);
  EXPECT_THROW(ops::mul(Tensor(Shape{2, 2}), Tensor(Shape{4})), ShapeError);
}

TEST(Elementwise, SigmoidStrictlyInsideUnitIntervalAndReluNonnegative) {
  Tensor x(Shape{7}, std::vector<float>{-80, -20, -1, 0, 1, 15, 80});
  auto s = ops::sigmoid(x.cast<double>());
  for (double v : s.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  auto u = Tensor::uniform({64}, 3, -5, 5);
  const auto r = ops::relu(u), a = ops::abs(u);
  for (float v : r.values()) EXPECT_GE(v, 0.0f);
  for (float v : a.values()) EXPECT_GE(v, 0.0f);
}

TEST(Matmul, HandCases) {
  auto b = Tensor::uniform({3, 4}, 1, -1, 1);
  EXPECT_TRUE(ops::bitwise_equal(ops::matmul(Tensor::identity(3), b), b));
  Tensor a(Shape{2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor ones(Shape{2, 1}, 1.0f);
  auto c = ops::matmul(a, ones);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 3.0f);
  EXPECT_EQ(c[1], 7.0f);
  EXPECT_THROW(ops::matmul(a, Tensor(Shape{3, 1})), ShapeError);
}

TEST(Matmul, MatchesTripleLoop) {
  auto a = Tensor::uniform({5, 6}, 11, -2, 2);
  auto b = Tensor::uniform({6, 4}, 12, -2, 2);
  auto c = ops::matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double ref = 0;
      for (std::size_t k = 0; k < 6; ++k) ref += double(a(i, k)) * b(k, j);
      EXPECT_LE(std::abs(c(i, j) - ref), 1e-5 * std::max(1.0, std::abs(ref)));
    }
}

TEST(Conv1x1, IdentityAndZeroKernels) {
  auto x = Tensor::uniform({3, 4, 5}, 2, -1, 1);
  EXPECT_TRUE(ops::bitwise_equal(ops::conv1x1(x, Tensor::identity(3)), x));
  Tensor k(Shape{2, 3}, 0.0f);
  Tensor bias(Shape{2}, std::vector<float>{0.25f, -1.5f});
  auto y = ops::conv1x1(x, k, &bias);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5}));
  for (std::size_t p = 0; p < 20; ++p) {
    EXPECT_EQ(y[p], 0.25f);
    EXPECT_EQ(y[20 + p], -1.5f);
  }
  EXPECT_THROW(ops::conv1x1(x, Tensor(Shape{2, 4})), ShapeError);
}

TEST(Conv1x1, MatchesPerPixelMatmul) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = Tensor::uniform({4, 3, 6}, seed, -10, 10);
    auto k = Tensor::uniform({5, 4}, seed + 100, -1, 1);
    auto y = ops::conv1x1(x, k);
    auto flat = ops::matmul(k, x.reshaped({4, 18}));
    EXPECT_LE(ops::max_abs_diff(y.reshaped({5, 18}), flat), 1e-6);
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 6; ++w) {
        Tensor col(Shape{4, 1});
        for (std::size_t c = 0; c < 4; ++c) col[c] = x(c, h, w);
        auto ref = ops::matmul(k, col);
        for (std::size_t o = 0; o < 5; ++o) EXPECT_NEAR(y(o, h, w), ref[o], 1e-5);
      }
  }
}

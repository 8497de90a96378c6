#include "sdqn/tensor.hpp"

#include <gtest/gtest.h>

using namespace sdqn;

TEST(Tensor, ShapeMatchesData) {
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(Tensor({2, 3}, {1.f, 2.f}), ShapeError);
}

TEST(Tensor, At3IsRowMajor) {
  Tensor t({2, 2, 3});
  t.at3(1, 0, 2) = 7.f;
  EXPECT_FLOAT_EQ(t.data[1 * 6 + 0 * 3 + 2], 7.f);
}

TEST(Tensor, FiniteScan) {
  Tensor t({3});
  EXPECT_TRUE(t.all_finite());
  t.data[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "x"), NonFiniteError);
}

TEST(Tensor, CastRoundTrip) {
  Tensor t = Tensor::from_values({1.5f, -2.25f, 0.f});
  auto d = t.cast<double>();
  auto back = d.cast<float>();
  EXPECT_EQ(back.data, t.data);
}

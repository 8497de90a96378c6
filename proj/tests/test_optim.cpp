#include "sdqn/optim.hpp"

#include <gtest/gtest.h>

using namespace sdqn;

namespace {

Network scalar_net(float w0) {
  Network net = NetBuilder({1}).dense(1).build(1);
  net.weights.at("fc1.w").data[0] = w0;
  net.weights.at("fc1.b").data[0] = 0.f;
  ++net.version;
  return net;
}

GradMap grads_like(const Network& net, float wg, float bg) {
  GradMap g;
  g.emplace("fc1.w", Tensor({1, 1}, {wg}));
  g.emplace("fc1.b", Tensor({1}, {bg}));
  return g;
}

}  // namespace

TEST(Adam, FirstStepEqualsLrTimesSign) {
  // w=0, g=1, lr=0.1, defaults: bias-corrected first step is lr*sign(g) up to eps.
  Network net = scalar_net(0.f);
  OptState st;
  optimizer_step(OptKind::kAdam, net, grads_like(net, 1.f, 0.f), 0.1, st);
  EXPECT_NEAR(net.weights.at("fc1.w").data[0], -0.1f, 1e-6);
  EXPECT_FLOAT_EQ(net.weights.at("fc1.b").data[0], 0.f);
}

TEST(Optimizers, ZeroGradientLeavesParams) {
  {
    // RMSprop: the update is proportional to g, so zero grad never moves
    // params, and the mean-square accumulator decays.
    Network net = scalar_net(0.75f);
    OptState st;
    optimizer_step(OptKind::kRmsProp, net, grads_like(net, 0.5f, 0.f), 0.01, st);
    const float w_after = net.weights.at("fc1.w").data[0];
    const float s_before = st.m1.at("fc1.w").data[0];
    optimizer_step(OptKind::kRmsProp, net, grads_like(net, 0.f, 0.f), 0.01, st);
    EXPECT_FLOAT_EQ(net.weights.at("fc1.w").data[0], w_after);
    EXPECT_LT(st.m1.at("fc1.w").data[0], s_before);
  }
  {
    // Adam from a fresh state: both moments stay zero, step is exactly zero.
    Network net = scalar_net(0.75f);
    OptState st;
    optimizer_step(OptKind::kAdam, net, grads_like(net, 0.f, 0.f), 0.01, st);
    EXPECT_FLOAT_EQ(net.weights.at("fc1.w").data[0], 0.75f);
  }
}

TEST(Optimizers, DeterministicAcrossRuns) {
  for (OptKind kind : {OptKind::kAdam, OptKind::kRmsProp}) {
    auto run = [&] {
      Network net = NetBuilder({3}).dense(4).relu().dense(2).build(17);
      OptState st;
      Rng rng = make_rng(5);
      std::uniform_real_distribution<float> dist(-1.f, 1.f);
      for (int i = 0; i < 25; ++i) {
        Tensor in({3});
        for (auto& v : in.data) v = dist(rng);
        auto [out, tape] = forward(net, in);
        GradMap g = backward(net, tape, out);
        optimizer_step(kind, net, g, 0.003, st);
      }
      return net.weights;
    };
    auto a = run();
    auto b = run();
    for (const auto& [k, v] : a) EXPECT_EQ(v.data, b.at(k).data) << k;
  }
}

TEST(Optimizers, KeyMismatchRejected) {
  Network net = scalar_net(0.f);
  GradMap g;
  g.emplace("nope.w", Tensor({1, 1}, {1.f}));
  g.emplace("nope.b", Tensor({1}, {0.f}));
  OptState st;
  EXPECT_THROW(optimizer_step(OptKind::kAdam, net, g, 0.1, st), StateError);
}

TEST(WeightedMse, ExactTarget) {
  Tensor p = Tensor::from_values({1.f, 2.f});
  Tensor w = Tensor::from_values({1.f, 1.f});
  auto r = weighted_mse(p, p, w);
  EXPECT_DOUBLE_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad.data, (std::vector<float>{0.f, 0.f}));
}

TEST(WeightedMse, UnitCase) {
  auto r = weighted_mse(Tensor::from_values({1.f}), Tensor::from_values({0.f}),
                        Tensor::from_values({1.f}));
  EXPECT_DOUBLE_EQ(r.loss, 1.0);
  EXPECT_FLOAT_EQ(r.grad.data[0], 2.f);
}

TEST(WeightedMse, WeightedCase) {
  auto r = weighted_mse(Tensor::from_values({2.f, 2.f}), Tensor::from_values({0.f, 0.f}),
                        Tensor::from_values({0.5f, 1.0f}));
  EXPECT_DOUBLE_EQ(r.loss, 3.0);  // (0.5*4 + 1*4)/2
  // grad = 2*w*(p-t)/N
  EXPECT_FLOAT_EQ(r.grad.data[0], 1.f);
  EXPECT_FLOAT_EQ(r.grad.data[1], 2.f);
}

TEST(WeightedMse, ShapeMismatch) {
  EXPECT_THROW(weighted_mse(Tensor({2}), Tensor({3}), Tensor({2})), ShapeError);
}

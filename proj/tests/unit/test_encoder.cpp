#include <gtest/gtest.h>

#include <random>

#include "contrinet/encoder.hpp"
#include "contrinet/model.hpp"
#include "contrinet/ops.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"
#include "testing.hpp"

using namespace contrinet;

TEST(Encoder, ToyLevelShapesAt64) {
  Bench b;
  ToyEncoder enc(b.builder("encoder"), kToyProfile);
  std::mt19937_64 rng(1);
  const Pyramid p = enc.forward(leaf(oracle::random_tensor({1, 3, 64, 64}, rng)), {true, false});
  const std::array<Shape, 5> want{Shape{1, 8, 32, 32}, {1, 16, 16, 16}, {1, 32, 8, 8}, {1, 64, 4, 4}, {1, 128, 2, 2}};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(p[i].shape(), want[i]) << "level " << i + 1;
}

TEST(Encoder, CeilHalvingOnOddSizes) {
  Bench b;
  ToyEncoder enc(b.builder(), kToyProfile);
  std::mt19937_64 rng(1);
  const Pyramid p = enc.forward(leaf(oracle::random_tensor({1, 3, 13, 7}, rng)), {});
  int h = 13, w = 7;
  for (int i = 0; i < 5; ++i) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    EXPECT_EQ(p[i].shape()[2], h);
    EXPECT_EQ(p[i].shape()[3], w);
  }
}

TEST(Encoder, SharedWeightsSwapExactly) {
  Bench b;
  ToyEncoder enc(b.builder(), kToyProfile);
  std::mt19937_64 rng(2);
  const Var x = leaf(oracle::random_tensor({2, 3, 64, 64}, rng));
  const Var y = leaf(oracle::random_tensor({2, 3, 64, 64}, rng));
  const auto [a_r, a_t] = extract_pyramids(enc, enc, x, y, {true, false});
  const auto [b_r, b_t] = extract_pyramids(enc, enc, y, x, {true, false});
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a_r[i].value(), b_t[i].value());
    EXPECT_EQ(a_t[i].value(), b_r[i].value());
  }
}

TEST(Encoder, ZeroInputZeroBiasGivesZeroPyramid) {
  Bench b;
  ToyEncoder enc(b.builder(), kToyProfile);
  const Pyramid p = enc.forward(leaf(Tensor({1, 3, 64, 64}, 0.0)), {true, false});
  for (const Var& v : p) EXPECT_EQ(v.value().max_abs(), 0.0);
}

TEST(Encoder, RejectsSizesNotDivisibleBy32) {
  Bench b;
  ToyEncoder enc(b.builder(), kToyProfile);
  const Var x = leaf(Tensor({1, 3, 48, 64}));
  EXPECT_THROW(extract_pyramids(enc, enc, x, x, {}), std::invalid_argument);
}

TEST(Encoder, InputGradientMatchesFiniteDifferences) {
  Bench b(4);
  ToyEncoder enc(b.builder(), kToyProfile);
  std::mt19937_64 rng(5);
  std::array<Tensor, 5> probes;
  int h = 16;
  for (int i = 0; i < 5; ++i) {
    h = (h + 1) / 2;
    probes[i] = oracle::random_tensor({1, kToyProfile[i], h, h}, rng);
  }
  auto f = [&](const Var& x) {
    const Pyramid p = enc.forward(x, {});
    Var total;
    for (int i = 0; i < 5; ++i) {
      const Var t = ops::sum(ops::mul(p[i], Var::constant(probes[i])));
      total = total.defined() ? ops::add(total, t) : t;
    }
    return total;
  };
  EXPECT_LE(input_grad_error(f, oracle::random_tensor({1, 3, 16, 16}, rng)), 1e-4);
}

TEST(Complexity, SingleConvHandCount) {
  Bench b;
  Conv2d conv(b.builder("c"), ConvSpec::square(2, 4, 3));
  const Complexity c = measure_complexity(b.store, [&] { conv(leaf(Tensor({1, 2, 5, 5}))); });
  EXPECT_EQ(c.params, 2 * 4 * 9 + 4);
  EXPECT_EQ(c.macs, 5 * 5 * 4 * 2 * 9);
}

TEST(Complexity, EmptyModelIsZero) {
  ParamStore empty;
  const Complexity c = measure_complexity(empty, [] {});
  EXPECT_EQ(c.params, 0);
  EXPECT_EQ(c.macs, 0);
}

TEST(Complexity, MetaCountMatchesMaterialisedModel) {
  const auto cfg = synthetic::toy_config(64, 8);
  const Complexity meta = count_complexity(cfg);
  ContriNet model(cfg);
  EXPECT_EQ(meta.params, model.params().trainable_count());
  const Var x = leaf(Tensor({1, 3, 64, 64}, 0.5));
  const Complexity real = measure_complexity(model.params(), [&] { model.forward(x, x, {}); });
  EXPECT_EQ(meta.macs, real.macs);
}

TEST(Model, BundleShapesAndRanges) {
  const auto cfg = synthetic::toy_config(64, 8);
  ContriNet model(cfg);
  std::mt19937_64 rng(3);
  const Var x = leaf(oracle::random_tensor({2, 3, 64, 64}, rng, 0, 1));
  const Var y = leaf(oracle::random_tensor({2, 3, 64, 64}, rng, 0, 1));
  ForwardTrace trace;
  const SaliencyBundle out = model.forward(x, y, {true, false}, &trace);
  for (Flow f : {Flow::kRgb, Flow::kThermal, Flow::kComplementary}) {
    ASSERT_TRUE(out.map_of(f).defined());
    EXPECT_EQ(out.map_of(f).shape(), (Shape{2, 1, 64, 64}));
  }
  EXPECT_EQ(out.m_f.shape(), (Shape{2, 1, 64, 64}));
  for (double v : out.m_f.value().values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(trace.e_s[i].shape(), trace.e_r[i].shape());
    EXPECT_EQ(trace.d_s[i].shape()[1], 8);
    EXPECT_EQ(trace.d_s[i].shape()[2], trace.e_s[i].shape()[2]);
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "contrinet/ops.hpp"
#include "oracle.hpp"
#include "testing.hpp"

using namespace contrinet;

TEST(Conv, MatchesLoopOracleOverGeometries) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 60; ++trial) {
    const int cin = 1 + pick(rng), cout = 1 + pick(rng);
    const int kh = 1 + 2 * (pick(rng) % 2), kw = 1 + pick(rng);
    const int stride = 1 + pick(rng) % 2, dil = 1 + pick(rng) % 3;
    const int pad_h = pick(rng), pad_w = pick(rng);
    const int h = 3 + pick(rng) * 2, w = 4 + pick(rng);
    if (h + 2 * pad_h < dil * (kh - 1) + 1 || w + 2 * pad_w < dil * (kw - 1) + 1) continue;
    const Tensor x = oracle::random_tensor({2, cin, h, w}, rng);
    const Tensor wt = oracle::random_tensor({cout, cin, kh, kw}, rng);
    const Tensor b = oracle::random_tensor({1, cout, 1, 1}, rng);
    ops::Conv2dGeometry g{stride, stride, pad_h, pad_w, dil, dil};
    const Tensor got = ops::conv2d(leaf(x), leaf(wt), leaf(b), g).value();
    EXPECT_LE(oracle::max_abs_diff(got, oracle::conv(x, wt, &b, stride, pad_h, pad_w, dil)), 1e-12) << trial;
  }
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Tensor wt = oracle::random_tensor({3, 2, 3, 3}, rng);
  const Tensor probe = oracle::random_tensor({1, 3, 3, 6}, rng);
  ops::Conv2dGeometry g{2, 1, 1, 2, 1, 2};
  auto f = [&](const Var& x) { return ops::sum(ops::mul(ops::conv2d(x, Var::constant(wt), Var(), g), Var::constant(probe))); };
  EXPECT_LE(input_grad_error(f, oracle::random_tensor({1, 2, 5, 6}, rng)), 1e-7);
}

TEST(Conv, MacCounterAdvances) {
  ops::reset_mac_count();
  const Tensor x({1, 2, 4, 4}, 1.0), w({4, 2, 3, 3}, 1.0);
  ops::conv2d(leaf(x), leaf(w), Var(), {1, 1, 1, 1, 1, 1});
  EXPECT_EQ(ops::mac_count(), 4 * 4 * 4 * 2 * 9);
}

TEST(BatchNorm, TrainingMatchesOracleAndUpdatesRunningStats) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({3, 2, 4, 5}, rng);
  const Tensor gamma = oracle::random_tensor({1, 2, 1, 1}, rng), beta = oracle::random_tensor({1, 2, 1, 1}, rng);
  Tensor rm({1, 2, 1, 1}, 0.0), rv({1, 2, 1, 1}, 1.0);
  const Tensor got = ops::batch_norm(leaf(x), leaf(gamma), leaf(beta), rm, rv, true, true, 0.1, 1e-5).value();
  EXPECT_LE(oracle::max_abs_diff(got, oracle::batch_norm(x, gamma, beta)), 1e-12);
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, ss = 0.0;
    const int count = 3 * 4 * 5;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) mean += x.at(n, c, i, j) / count;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) ss += std::pow(x.at(n, c, i, j) - mean, 2);
    EXPECT_NEAR(rm.at(0, c, 0, 0), 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv.at(0, c, 0, 0), 0.9 + 0.1 * ss / (count - 1), 1e-12);
  }
  // Inference mode uses the running statistics.
  const Tensor eval = ops::batch_norm(leaf(x), leaf(gamma), leaf(beta), rm, rv, false, false, 0.1, 1e-5).value();
  EXPECT_NEAR(eval.at(1, 1, 2, 3),
              gamma.at(0, 1, 0, 0) * (x.at(1, 1, 2, 3) - rm.at(0, 1, 0, 0)) / std::sqrt(rv.at(0, 1, 0, 0) + 1e-5) +
                  beta.at(0, 1, 0, 0),
              1e-12);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  const Tensor gamma = oracle::random_tensor({1, 2, 1, 1}, rng), beta = oracle::random_tensor({1, 2, 1, 1}, rng);
  const Tensor probe = oracle::random_tensor({2, 2, 3, 3}, rng);
  auto f = [&](const Var& x) {
    Tensor rm({1, 2, 1, 1}, 0.0), rv({1, 2, 1, 1}, 1.0);
    return ops::sum(ops::mul(
        ops::batch_norm(x, Var::constant(gamma), Var::constant(beta), rm, rv, true, false, 0.1, 1e-5),
        Var::constant(probe)));
  };
  EXPECT_LE(input_grad_error(f, oracle::random_tensor({2, 2, 3, 3}, rng)), 1e-6);
}

TEST(Resize, BilinearMatchesOracle) {
  std::mt19937_64 rng(4);
  for (auto [h, w, oh, ow] : std::vector<std::array<int, 4>>{{2, 2, 4, 4}, {3, 5, 7, 13}, {8, 8, 4, 4}, {5, 3, 5, 3},
                                                             {1, 1, 3, 2}, {7, 6, 32, 9}}) {
    const Tensor x = oracle::random_tensor({2, 3, h, w}, rng);
    EXPECT_LE(oracle::max_abs_diff(ops::resize_bilinear(leaf(x), oh, ow).value(), oracle::bilinear(x, oh, ow)),
              1e-12);
  }
  const Tensor probe = oracle::random_tensor({1, 2, 9, 7}, rng);
  auto f = [&](const Var& x) { return ops::sum(ops::mul(ops::resize_bilinear(x, 9, 7), Var::constant(probe))); };
  EXPECT_LE(input_grad_error(f, oracle::random_tensor({1, 2, 4, 3}, rng)), 1e-7);
}

TEST(Pooling, AverageAndAdaptiveAndMax) {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({1, 2, 6, 7}, rng);
  const Tensor avg = ops::avg_pool2d(leaf(x), 3, 2, 1, true).value();
  ASSERT_EQ(avg.shape(), (Shape{1, 2, 3, 4}));
  for (int c = 0; c < 2; ++c)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 4; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int y = oy * 2 - 1 + ky, xx = ox * 2 - 1 + kx;
            if (y >= 0 && y < 6 && xx >= 0 && xx < 7) acc += x.at(0, c, y, xx);
          }
        EXPECT_NEAR(avg.at(0, c, oy, ox), acc / 9.0, 1e-12);
      }
  const Tensor ad = ops::adaptive_avg_pool(leaf(x), 4, 3).value();
  for (int c = 0; c < 2; ++c)
    for (int oy = 0; oy < 4; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        const int y0 = oy * 6 / 4, y1 = ((oy + 1) * 6 + 3) / 4;
        const int x0 = ox * 7 / 3, x1 = ((ox + 1) * 7 + 2) / 3;
        double acc = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) acc += x.at(0, c, y, xx);
        EXPECT_NEAR(ad.at(0, c, oy, ox), acc / ((y1 - y0) * (x1 - x0)), 1e-12);
      }
  const Tensor mx = ops::max_pool2d(leaf(x), 2, 2, 0).value();
  EXPECT_DOUBLE_EQ(mx.at(0, 1, 1, 2), std::max({x.at(0, 1, 2, 4), x.at(0, 1, 2, 5), x.at(0, 1, 3, 4), x.at(0, 1, 3, 5)}));
  EXPECT_LE(oracle::max_abs_diff(ops::global_avg_pool(leaf(x)).value(), oracle::global_mean(x)), 1e-12);
}

TEST(Softmax, ChannelsSumToOneAndMatchClosedForm) {
  const Tensor z({1, 2, 1, 1}, std::vector<double>{std::log(3.0), 0.0});
  const Tensor s = ops::softmax_channels(leaf(z)).value();
  EXPECT_NEAR(s[0], 0.75, 1e-15);
  EXPECT_NEAR(s[1], 0.25, 1e-15);
  std::mt19937_64 rng(1);
  const Tensor big = oracle::random_tensor({3, 4, 2, 2}, rng, -800, 800);
  const Tensor sb = ops::softmax_channels(leaf(big)).value();
  EXPECT_TRUE(sb.all_finite());
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int c = 0; c < 4; ++c) acc += sb.at(n, c, i, j);
        EXPECT_NEAR(acc, 1.0, 1e-12);
      }
}

TEST(Elementwise, BroadcastAndChannelReductions) {
  std::mt19937_64 rng(9);
  const Tensor a = oracle::random_tensor({2, 3, 4, 4}, rng);
  const Tensor g = oracle::random_tensor({2, 3, 1, 1}, rng), s = oracle::random_tensor({2, 1, 4, 4}, rng);
  EXPECT_LE(oracle::max_abs_diff(ops::mul(leaf(a), leaf(g)).value(), oracle::mul(a, g)), 1e-15);
  EXPECT_LE(oracle::max_abs_diff(ops::mul(leaf(a), leaf(s)).value(), oracle::mul(a, s)), 1e-15);
  const Tensor m = ops::channel_max(leaf(a)).value(), mean = ops::channel_mean(leaf(a)).value();
  EXPECT_DOUBLE_EQ(m.at(1, 0, 2, 3), std::max({a.at(1, 0, 2, 3), a.at(1, 1, 2, 3), a.at(1, 2, 2, 3)}));
  EXPECT_NEAR(mean.at(1, 0, 2, 3), (a.at(1, 0, 2, 3) + a.at(1, 1, 2, 3) + a.at(1, 2, 2, 3)) / 3.0, 1e-15);
  const Tensor probe = oracle::random_tensor({2, 1, 4, 4}, rng);
  auto f = [&](const Var& x) {
    return ops::sum(ops::mul(ops::add(ops::channel_max(x), ops::channel_mean(ops::mul(x, x))), Var::constant(probe)));
  };
  EXPECT_LE(input_grad_error(f, a), 1e-7);
}

TEST(MetaTensors, PropagateShapesOnly) {
  const Var x = Var::leaf(Tensor::meta({1, 3, 64, 64}));
  const Var w = Var::leaf(Tensor::meta({8, 3, 3, 3}));
  ops::reset_mac_count();
  const Var y = ops::conv2d(x, w, Var(), {2, 2, 1, 1, 1, 1});
  EXPECT_TRUE(y.is_meta());
  EXPECT_EQ(y.shape(), (Shape{1, 8, 32, 32}));
  EXPECT_EQ(ops::mac_count(), 8LL * 32 * 32 * 27);
  EXPECT_EQ(ops::resize_bilinear(y, 64, 64).shape(), (Shape{1, 8, 64, 64}));
}

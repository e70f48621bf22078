// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "rcnas/error.hpp"
#include "rcnas/grad_check.hpp"
#include "rcnas/primitives.hpp"
#include "rcnas/rng.hpp"
#include "support/grad_cases.hpp"

namespace rcnas {
namespace {

// Direct seven-loop convolution with zero padding.
Array naive_conv(const Array& x, const Array& w, std::size_t stride, std::size_t pad, std::size_t dil,
                 std::size_t groups) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), cig = w.dim(1), k = w.dim(2);
  const std::size_t ho = (h + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const std::size_t cog = co / groups;
  Array y({n, co, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = 0.0;
          const std::size_t g = o / cog;
          for (std::size_t c = 0; c < cig; ++c)
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t q = 0; q < k; ++q) {
                const long r = long(i * stride + p * dil) - long(pad);
                const long s = long(j * stride + q * dil) - long(pad);
                if (r < 0 || s < 0 || r >= long(h) || s >= long(wd)) continue;
                acc += x[((b * ci + g * cig + c) * h + r) * wd + s] * w[((o * cig + c) * k + p) * k + q];
              }
          y[((b * co + o) * ho + i) * wo + j] = acc;
        }
  return y;
}

TEST(Tensor, ArrayRejectsDataShapeMismatch) {
  EXPECT_THROW(Array({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
}

TEST(Tensor, NonFiniteValuesAreDetectable) {
  Tape tape;
  Tensor x(Array({2}, std::vector<double>{1e308, 1e308}));
  Tensor y = prim::add(tape, x, x);
  EXPECT_FALSE(y.value().all_finite());
  EXPECT_TRUE(x.value().all_finite());
}

TEST(Tensor, GradBufferFollowsRequiresGrad) {
  Tensor t = Tensor::zeros({3}, true);
  EXPECT_TRUE(t.requires_grad());
  t.set_requires_grad(false);
  EXPECT_FALSE(t.has_grad());
}

TEST(Primitives, ReluExample) {
  Tape tape;
  Tensor y = prim::relu(tape, Tensor(Array({3}, std::vector<double>{-1, 0, 2})));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{0, 0, 2}));
}

TEST(Primitives, IdentityPointwiseConvIsIdentity) {
  Rng rng(3);
  Tape tape;
  Array x = testing::random_array({2, 3, 4, 4}, rng);
  Array w({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  Tensor y = prim::conv2d(tape, Tensor(x), Tensor(w), {});
  EXPECT_EQ(y.value(), x);
}

TEST(Primitives, PaddedConvKeepsSpatialSize) {
  Tape tape;
  Tensor y = prim::conv2d(tape, Tensor::zeros({1, 2, 8, 8}), Tensor::zeros({3, 2, 3, 3}), {1, 1, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 3, 8, 8}));
}

TEST(Primitives, ConvMatchesDirectLoops) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t g = 1 + trial % 2, k = trial % 3 == 0 ? 1 : (trial % 3 == 1 ? 3 : 5);
    const std::size_t stride = 1 + trial % 2, dil = 1 + (trial / 2) % 2, pad = dil * (k - 1) / 2;
    Array x = testing::random_array({2, 2 * g, 7, 6}, rng);
    Array w = testing::random_array({3 * g, 2, k, k}, rng);
    Tape tape;
    Tensor y = prim::conv2d(tape, Tensor(x), Tensor(w), {stride, pad, dil, g});
    const Array ref = naive_conv(x, w, stride, pad, dil, g);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) ASSERT_NEAR(y.value()[i], ref[i], 1e-12) << trial;
  }
}

TEST(Primitives, ConvRejectsIndivisibleGroups) {
  Tape tape;
  EXPECT_THROW(prim::conv2d(tape, Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 1, 1, 1}), {1, 0, 1, 2}),
               ShapeError);
}

TEST(Primitives, ShapeErrorNamesPrimitive) {
  Tape tape;
  try {
    prim::add(tape, Tensor::zeros({2}), Tensor::zeros({3}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
  }
}

TEST(Primitives, UnknownPrimitiveThrows) {
  Tape tape;
  std::vector<Tensor> in{Tensor::zeros({1})};
  EXPECT_THROW(prim::apply_primitive(tape, "gelu", in), Error);
}

TEST(Primitives, ChannelShuffleInterleaves) {
  Tape tape;
  Tensor x(Array({1, 4, 1, 1}, std::vector<double>{0, 1, 2, 3}));
  Tensor y = prim::channel_shuffle(tape, x, 2);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{0, 2, 1, 3}));
}

TEST(Primitives, MaxPoolPaddingActsAsMinusInfinity) {
  Tape tape;
  Tensor x(Array({1, 1, 2, 2}, std::vector<double>{-4, -3, -2, -1}));
  Tensor y = prim::max_pool2d(tape, x, {3, 1, 1});
  for (double v : y.data()) EXPECT_EQ(v, -1.0);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Tensor x = Tensor::zeros({2, 3}, true);
  tape.backward(prim::sum(tape, x));
  for (double g : x.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, CrossEntropyAtUniformLogits) {
  const std::size_t k = 5;
  Tape tape;
  Tensor logits = Tensor::zeros({1, k}, true);
  Tensor labels(Array({1}, std::vector<double>{2}));
  tape.backward(prim::cross_entropy(tape, logits, labels));
  for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(logits.grad()[i], 1.0 / k - (i == 2 ? 1.0 : 0.0), 1e-15);
}

TEST(Backward, FanOutAccumulatesExactly) {
  Rng rng(5);
  Tape tape;
  Tensor x(testing::random_array({4}, rng), true);
  Tensor y = prim::add(tape, x, x);
  Tensor r(testing::random_array({4}, rng));
  tape.backward(prim::sum(tape, prim::mul(tape, y, r)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(x.grad()[i], 2.0 * r.value()[i]);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Tensor x = Tensor::zeros({2}, true);
  Tensor y = prim::scale(tape, x, 2.0);
  EXPECT_THROW(tape.backward(y), Error);
}

TEST(Backward, ReplaysInReverseRecordingOrder) {
  Tape tape;
  Tensor x = Tensor::zeros({2}, true);
  Tensor a = prim::relu(tape, x);
  Tensor b = prim::scale(tape, a, 2.0);
  prim::sum(tape, b);
  ASSERT_EQ(tape.size(), 3u);
  EXPECT_EQ(tape.records()[0].primitive, "relu");
  EXPECT_EQ(tape.records()[2].primitive, "sum");
  // Every record's inputs were produced by earlier records or are leaves.
  for (std::size_t i = 0; i < tape.size(); ++i)
    for (const Tensor& in : tape.records()[i].inputs)
      for (std::size_t j = i; j < tape.size(); ++j) EXPECT_NE(in.id(), tape.records()[j].output.id());
}

TEST(Backward, RandomChainMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Array w = testing::random_array({2, 2, 3, 3}, rng);
    ScalarFn f = [w](Tape& tape, const Tensor& x) {
      Tensor y = prim::conv2d(tape, x, Tensor(w), {1, 1, 1, 1});
      y = prim::global_avg_pool(tape, y);
      return prim::cross_entropy(tape, y, Tensor(Array({2}, std::vector<double>{0, 1})));
    };
    EXPECT_TRUE(grad_check(f, testing::random_array({2, 2, 4, 4}, rng)).passed);
  }
}

TEST(GradCheck, SquareAtThree) {
  ScalarFn f = [](Tape& tape, const Tensor& x) { return prim::sum(tape, prim::mul(tape, x, x)); };
  const auto r = grad_check(f, Array({1}, std::vector<double>{3.0}));
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.analytic[0], 6.0, 1e-12);
  EXPECT_NEAR(r.numeric[0], 6.0, 1e-8);
}

TEST(GradCheck, ListsFailingCoordinates) {
  ScalarFn f = [](Tape& tape, const Tensor& x) {
    return prim::sum(tape, prim::mul(tape, x, Tensor(x.value())));
  };
  const auto r = grad_check(f, Array({2}, std::vector<double>{1.0, 2.0}));
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.failing, (std::vector<std::size_t>{0, 1}));
}

TEST(GradCheck, PropagatesErrorsWithCoordinate) {
  ScalarFn f = [](Tape& tape, const Tensor& x) {
    if (x.value()[1] > 1.00005) throw NumericError("blew up");
    return prim::sum(tape, x);
  };
  try {
    grad_check(f, Array({2}, std::vector<double>{0.0, 1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Tape, SameSeedIsBitIdentical) {
  auto run = [] {
    Rng rng(99);
    Array w = testing::random_array({3, 2, 3, 3}, rng);
    Tape tape;
    Tensor x(testing::random_array({2, 2, 5, 5}, rng), true);
    Tensor y = prim::batch_norm(tape, prim::conv2d(tape, x, Tensor(w), {1, 1, 1, 1}), Tensor(Array({3}, 1.0)),
                                Tensor(Array({3}, 0.0)));
    tape.backward(prim::sum(tape, prim::mul(tape, y, y)));
    return std::make_pair(y.value(), x.grad());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace rcnas

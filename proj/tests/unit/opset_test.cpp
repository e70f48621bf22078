// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "rcnas/error.hpp"
#include "rcnas/opset.hpp"
#include "rcnas/primitives.hpp"
#include "support/grad_cases.hpp"

namespace rcnas {
namespace {

std::vector<OpKind> all_kinds() {
  std::vector<OpKind> kinds = default_cell_ops();
  for (OpKind k : default_connection_ops()) kinds.push_back(k);
  return kinds;
}

OpContext random_context(OpKind kind, Rng& rng) {
  OpContext ctx;
  ctx.c_in = 4 * testing::pick(rng, 1, 3);
  ctx.c_out = is_connection_op(kind) ? 4 * testing::pick(rng, 1, 3) : ctx.c_in;
  // Factorized reduce needs even spatial dims.
  ctx.h_in = 2 * testing::pick(rng, 2, 5);
  ctx.w_in = 2 * testing::pick(rng, 2, 5);
  ctx.stride = is_connection_op(kind) ? 1 : testing::pick(rng, 1, 2);
  return ctx;
}

TEST(Opset, SetSizesAndZeroPlacement) {
  EXPECT_EQ(default_cell_ops().size(), 8u);
  EXPECT_EQ(default_connection_ops().size(), 4u);
  EXPECT_EQ(default_cell_ops()[0], OpKind::kZero);
  for (OpKind k : default_connection_ops()) EXPECT_NE(k, OpKind::kZero);
  std::set<std::string_view> names;
  for (OpKind k : all_kinds()) {
    names.insert(op_name(k));
    EXPECT_EQ(op_from_name(op_name(k)), k);
  }
  EXPECT_EQ(names.size(), 12u);
  EXPECT_FALSE(op_from_name("conv_7x7").has_value());
}

TEST(Opset, WeightCountEqualsParamCount) {
  Rng rng(2026);
  for (OpKind kind : all_kinds()) {
    for (int i = 0; i < 10; ++i) {
      const OpContext ctx = random_context(kind, rng);
      Rng init(i);
      const OpInstance op = build_op(kind, ctx, init);
      EXPECT_EQ(op.weight_count(), param_count(kind, ctx)) << op_name(kind);
      std::size_t total = 0;
      for (const Parameter& p : op.parameters()) total += p.tensor.numel();
      EXPECT_EQ(total, op.weight_count());
    }
  }
}

TEST(Opset, ApplyKeepsOutputShapeContract) {
  Rng rng(7);
  for (OpKind kind : all_kinds()) {
    for (int i = 0; i < 4; ++i) {
      const OpContext ctx = random_context(kind, rng);
      const OpInstance op = build_op(kind, ctx, rng);
      Tape tape;
      Tensor x(testing::random_array({2, ctx.c_in, ctx.h_in, ctx.w_in}, rng));
      Tensor y = op.apply(tape, x);
      EXPECT_EQ(y.shape(), (Shape{2, ctx.c_out, ctx.h_out(), ctx.w_out()})) << op_name(kind);
    }
  }
}

TEST(Opset, ZeroHasNoWeightsAndOutputsZeros) {
  Rng rng(1);
  const OpContext ctx{4, 4, 6, 6, 2};
  const OpInstance op = build_op(OpKind::kZero, ctx, rng);
  EXPECT_EQ(op.weight_count(), 0u);
  Tape tape;
  Tensor y = op.apply(tape, Tensor(testing::random_array({1, 4, 6, 6}, rng)));
  EXPECT_EQ(y.shape(), (Shape{1, 4, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(op.apply(tape, Tensor(Array({1, 4, 6, 6})), false).defined());
}

TEST(Opset, IdentityPassesThrough) {
  Rng rng(1);
  const OpInstance op = build_op(OpKind::kIdentity, {3, 3, 5, 5, 1}, rng);
  Tape tape;
  Tensor x(testing::random_array({2, 3, 5, 5}, rng));
  EXPECT_EQ(op.apply(tape, x).value(), x.value());
}

TEST(Opset, ConventionExamples) {
  EXPECT_EQ(param_count(OpKind::kZero, {16, 16, 8, 8, 1}), 0u);
  EXPECT_EQ(param_count(OpKind::kGroupConv1x1G1, {16, 16, 8, 8, 1}), 288u);
  EXPECT_EQ(param_count(OpKind::kSepConv3, {16, 16, 8, 8, 1}), 864u);
  EXPECT_EQ(flop_count(OpKind::kIdentity, {4, 4, 8, 8, 1}), 0u);
  EXPECT_EQ(conv_macs(3, 4, 4, 8, 8), 9216u);
  EXPECT_EQ(flop_count(OpKind::kMaxPool3, {4, 4, 8, 8, 1}), 2304u);
  EXPECT_EQ(flop_count(OpKind::kAvgPool3, {4, 4, 8, 8, 1}), 2304u);
}

TEST(Opset, SepConvBuildsTwoStackedBlocks) {
  Rng rng(1);
  const OpInstance op = build_op(OpKind::kSepConv3, {16, 16, 8, 8, 1}, rng);
  // Two (depthwise, pointwise, gamma, beta) blocks.
  ASSERT_EQ(op.parameters().size(), 8u);
  EXPECT_EQ(op.parameters()[0].tensor.shape(), (Shape{16, 1, 3, 3}));
  EXPECT_EQ(op.parameters()[1].tensor.shape(), (Shape{16, 16, 1, 1}));
  EXPECT_EQ(op.parameters()[4].tensor.shape(), (Shape{16, 1, 3, 3}));
}

TEST(Opset, GroupedConvShufflesChannels) {
  Rng rng(1);
  const OpInstance op = build_op(OpKind::kGroupConv1x1G2, {8, 8, 4, 4, 1}, rng);
  EXPECT_EQ(op.parameters()[0].tensor.shape(), (Shape{8, 4, 1, 1}));
  EXPECT_EQ(param_count(OpKind::kGroupConv1x1G2, {8, 8, 4, 4, 1}), 8u * 4 + 16);
}

TEST(Opset, GroupsMustDivideChannels) {
  Rng rng(1);
  EXPECT_THROW(build_op(OpKind::kGroupConv1x1G4, {6, 8, 4, 4, 1}, rng), Error);
}

TEST(Opset, LargerSeparableKernelCostsMore) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const OpContext ctx = random_context(OpKind::kSepConv3, rng);
    EXPECT_GT(param_count(OpKind::kSepConv5, ctx), param_count(OpKind::kSepConv3, ctx));
    EXPECT_GT(flop_count(OpKind::kSepConv5, ctx), flop_count(OpKind::kSepConv3, ctx));
    EXPECT_GT(param_count(OpKind::kDilSepConv5, ctx), param_count(OpKind::kDilSepConv3, ctx));
  }
}

TEST(Opset, ContextValidation) {
  EXPECT_THROW((OpContext{0, 4, 4, 4, 1}).validate(), ShapeError);
  EXPECT_THROW((OpContext{4, 4, 4, 4, 3}).validate(), ShapeError);
  EXPECT_NO_THROW((OpContext{4, 4, 4, 4, 2}).validate());
}

TEST(Opset, ApplyRejectsWrongInputShape) {
  Rng rng(1);
  const OpInstance op = build_op(OpKind::kSepConv3, {4, 4, 6, 6, 1}, rng);
  Tape tape;
  EXPECT_THROW(op.apply(tape, Tensor(Array({1, 3, 6, 6}))), ShapeError);
}

}  // namespace
}  // namespace rcnas

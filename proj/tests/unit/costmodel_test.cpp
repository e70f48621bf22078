// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rcnas/costmodel.hpp"
#include "rcnas/error.hpp"
#include "support/grad_cases.hpp"

namespace rcnas {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CostTable single_edge(const std::vector<double>& u) {
  const ArchParams layout = ArchParams::with_slots({u.size()});
  return CostTable::custom(layout, {u, std::vector<double>(u.size(), 0.0)});
}

NetworkPlan small_plan() {
  NetworkPlan plan;
  plan.n_cells = 4;
  plan.n_nodes = 5;
  plan.levels = 2;
  plan.init_channels = 4;
  plan.image_size = 8;
  return plan;
}

TEST(CostModel, UniformThetaAveragesRow) {
  const ArchParams theta = ArchParams::with_slots({3});
  const CostVector phi = expected_cost(theta, single_edge({0, 0, 9216}), ScopeMask{true});
  EXPECT_DOUBLE_EQ(phi[0], 3072.0);
}

TEST(CostModel, GradientClosedFormAtUniform) {
  const ArchParams theta = ArchParams::with_slots({3});
  const auto g = cost_gradient(theta, single_edge({0, 0, 9216}), ScopeMask{true});
  EXPECT_NEAR(g[0][2], 2048.0, 1e-9);
  EXPECT_NEAR(g[0][0], -1024.0, 1e-9);
  // Central differences as an independent check.
  const auto c = testing::CostGradCase{theta, single_edge({0, 0, 9216}), ScopeMask{true}, 0};
  EXPECT_LE(testing::check_cost_gradient(c).max_rel_error, 1e-6);
}

TEST(CostModel, ConstantRowHasZeroGradient) {
  Rng rng(1);
  ArchParams theta = ArchParams::with_slots({5});
  for (double& v : theta.values()) v = normal(rng);
  const auto g = cost_gradient(theta, single_edge({7, 7, 7, 7, 7}), ScopeMask{true});
  for (double v : g[0]) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(CostModel, SaturatedThetaPicksRow) {
  ArchParams theta = ArchParams::with_slots({3});
  theta.values() = {0, 40, 0};
  const CostVector phi = expected_cost(theta, single_edge({3, 500, 11}), ScopeMask{true});
  EXPECT_NEAR(phi[0], 500.0, 500.0 * 1e-9);
}

TEST(CostModel, RandomGradientsMatchFiniteDifferences) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    const auto c = testing::random_cost_case(derive_seed(5, s));
    EXPECT_LE(testing::check_cost_gradient(c).max_rel_error, 1e-6);
  }
}

TEST(CostModel, PerEdgeCostIsBounded) {
  Rng rng(3);
  const std::vector<double> u{2, 9, 4, 0.5};
  for (int i = 0; i < 50; ++i) {
    ArchParams theta = ArchParams::with_slots({4});
    for (double& v : theta.values()) v = 5 * normal(rng);
    const double phi = expected_cost(theta, single_edge(u), ScopeMask{true})[0];
    EXPECT_GE(phi, 0.5);
    EXPECT_LE(phi, 9.0);
  }
}

TEST(CostModel, TableIsThetaFreeAndNonNegative) {
  const NetworkPlan plan = small_plan();
  const CostTable a = CostTable::build(plan);
  const CostTable b = CostTable::build(plan);
  EXPECT_EQ(a.hash(), b.hash());
  const ArchParams theta(plan);
  const CellTemplate cell = plan.template_of(CellKind::normal(0));
  for (std::size_t s = 0; s < a.n_slots(); ++s) {
    for (std::size_t m = 0; m < kMetrics; ++m)
      for (double v : a.row(s, m)) EXPECT_GE(v, 0.0);
    if (theta.slots()[s].kind.type == CellKind::Type::kConnection) continue;
    EXPECT_EQ(a.row(s, 0)[0], 0.0);  // Zero
    EXPECT_EQ(a.row(s, 1)[0], 0.0);
  }
  EXPECT_THROW(CostTable::custom(ArchParams::with_slots({2}), {std::vector<double>{1, -1}, {0, 0}}), Error);
}

TEST(CostModel, SaturatedTopKMatchesExactCost) {
  const NetworkPlan plan = small_plan();
  const CostTable table = CostTable::build(plan);
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const DiscreteArch arch = derive_discrete(ArchParams::random(plan, rng, 1.0), plan);
    const ArchParams sat = saturated_theta(arch, plan);
    const CostVector phi = expected_cost(sat, table, scope_mask(sat, plan, CostScope::kTopK));
    const CostVector exact = exact_cost(arch, plan);
    for (std::size_t m = 0; m < kMetrics; ++m) EXPECT_NEAR(phi[m], exact[m], exact[m] * 1e-9);
  }
}

TEST(CostModel, FullDagCoversTopK) {
  const NetworkPlan plan = small_plan();
  const ArchParams theta(plan);
  const ScopeMask full = scope_mask(theta, plan, CostScope::kFullDag);
  const ScopeMask top = scope_mask(theta, plan, CostScope::kTopK);
  for (std::size_t s = 0; s < full.size(); ++s) {
    EXPECT_TRUE(full[s]);
    if (theta.slots()[s].kind.type == CellKind::Type::kConnection) {
      EXPECT_TRUE(top[s]);
    }
  }
}

TEST(CostModel, DoublingChannelsQuadruplesConvTerms) {
  EXPECT_EQ(conv_macs(1, 32, 32, 8, 8), 4 * conv_macs(1, 16, 16, 8, 8));
  NetworkPlan a = small_plan();
  NetworkPlan b = a;
  b.init_channels = 2 * a.init_channels;
  const DiscreteArch arch = derive_discrete(ArchParams(a), a);
  const double ratio = exact_cost(arch, b)[1] / exact_cost(arch, a)[1];
  // Pointwise terms scale by 4, depthwise and pooling terms by 2.
  EXPECT_GT(ratio, 2.0);
  EXPECT_LE(ratio, 4.0);
}

TEST(CostModel, ViolationExamples) {
  ConstraintBox box;
  box.lower = {10, 10};
  box.upper = {20, 20};
  auto [lo, hi] = violation({15, 15}, box);
  EXPECT_EQ(lo, (CostVector{0, 0}));
  EXPECT_EQ(hi, (CostVector{0, 0}));
  std::tie(lo, hi) = violation({25, 10}, box);
  EXPECT_EQ(hi[0], 5.0);
  EXPECT_EQ(lo[1], 0.0);
  EXPECT_TRUE(feasible({10, 20}, box));
  EXPECT_FALSE(feasible({9, 20}, box));
}

TEST(CostModel, BoxValidation) {
  ConstraintBox box;
  EXPECT_TRUE(box.unbounded());
  box.lower = {5, 0};
  box.upper = {4, kInf};
  EXPECT_THROW(box.validate(), ConfigError);
}

TEST(CostModel, ReportCsvHeader) {
  const std::string csv = cost_report_csv({1, 2}, {1, 2}, ConstraintBox{});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,expected,exact,C_L,C_H,violation");
  EXPECT_EQ(scope_from_name(scope_name(CostScope::kTopK)), CostScope::kTopK);
}

}  // namespace
}  // namespace rcnas

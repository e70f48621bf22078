// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rcnas/error.hpp"
#include "rcnas/projection.hpp"
#include "support/grad_cases.hpp"

namespace rcnas {
namespace {

struct Instance {
  ArchParams theta;
  CostTable table;
  ScopeMask mask;
  ConstraintBox box;
};

Instance single_edge(double upper) {
  Instance in{ArchParams::with_slots({2}), CostTable::custom(ArchParams::with_slots({2}), {std::vector<double>{0, 100}, {0, 0}}),
              ScopeMask{true}, ConstraintBox{}};
  in.box.upper[0] = upper;
  return in;
}

// A random instance whose anchor violates at least one bound.
Instance random_infeasible(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    auto c = testing::random_cost_case(derive_seed(seed, attempt));
    Instance in{c.theta, c.table, c.mask, ConstraintBox{}};
    const CostVector phi = expected_cost(in.theta, in.table, in.mask);
    Rng rng(derive_seed(seed, 1000 + attempt));
    for (std::size_t m = 0; m < kMetrics; ++m) {
      if (uniform01(rng) < 0.5) {
        in.box.upper[m] = phi[m] * uniform(rng, 0.5, 0.95);
      } else {
        in.box.lower[m] = phi[m] * uniform(rng, 1.05, 1.5);
      }
    }
    if (!feasible(phi, in.box)) return in;
  }
}

TEST(Projection, LagrangianExamples) {
  Instance in = single_edge(25);
  EXPECT_DOUBLE_EQ(lagrangian(in.theta, in.theta, in.box, in.table, in.mask, 3.0, 3.0), 3.0 * 25);
  EXPECT_DOUBLE_EQ(lagrangian(in.theta, in.theta, in.box, in.table, in.mask, 0.0, 0.0), 0.0);
  ArchParams moved = in.theta;
  moved.values() = {-1.0, 1.0};
  const double phi = expected_cost(moved, in.table, in.mask)[0];
  EXPECT_NEAR(lagrangian(moved, in.theta, in.box, in.table, in.mask, 0.0, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(lagrangian(moved, in.theta, in.box, in.table, in.mask, 2.0, 2.0), 1.0 + 2.0 * (phi - 25), 1e-12);
  Instance loose = single_edge(80);
  EXPECT_DOUBLE_EQ(lagrangian(loose.theta, loose.theta, loose.box, loose.table, loose.mask, 5, 5), 0.0);
}

TEST(Projection, LambdaSchedule) {
  ProjectionConfig cfg;
  cfg.lambda0 = 10;
  cfg.gamma = 0.9;
  EXPECT_NEAR(decay_lambda(cfg, 2).first, 8.1, 1e-12);
  EXPECT_EQ(decay_lambda(cfg, 2).first, decay_lambda(cfg, 2).second);
  EXPECT_LT(decay_lambda(cfg, 500).first, 1e-20);
  cfg.gamma = 1.0;
  EXPECT_EQ(decay_lambda(cfg, 77).first, 10.0);
}

TEST(Projection, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Instance in = random_infeasible(s);
    Rng rng(s);
    ArchParams p = in.theta;
    for (double& v : p.values()) v += 0.3 * normal(rng);
    const auto g = lagrangian_gradient(p, in.theta, in.box, in.table, in.mask, 0.7, 0.7);
    for (std::size_t i = 0; i < p.size(); ++i) {
      ArchParams up = p, down = p;
      up.values()[i] += 1e-5;
      down.values()[i] -= 1e-5;
      const double num = (lagrangian(up, in.theta, in.box, in.table, in.mask, 0.7, 0.7) -
                          lagrangian(down, in.theta, in.box, in.table, in.mask, 0.7, 0.7)) / 2e-5;
      EXPECT_NEAR(g[i], num, 1e-5 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST(Projection, GradientStepDescends) {
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Instance in = random_infeasible(derive_seed(42, s));
    const double h0 = lagrangian(in.theta, in.theta, in.box, in.table, in.mask, 1.0, 1.0);
    const auto g = lagrangian_gradient(in.theta, in.theta, in.box, in.table, in.mask, 1.0, 1.0);
    const double norm2 = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
    if (norm2 == 0.0) continue;
    ArchParams next = in.theta;
    const double step = 1e-3 / std::sqrt(norm2);
    for (std::size_t i = 0; i < next.size(); ++i) next.values()[i] -= step * g[i];
    EXPECT_LT(lagrangian(next, in.theta, in.box, in.table, in.mask, 1.0, 1.0), h0) << s;
    ++checked;
  }
  EXPECT_GE(checked, 100u);
}

TEST(Projection, FeasibleAnchorIsUnchanged) {
  Instance in = single_edge(80);
  in.theta.values() = {0.3, -0.2};
  const auto r = project(in.theta, in.box, in.table, in.mask, ProjectionConfig{}, 1.0);
  EXPECT_EQ(r.theta_p, in.theta);
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_TRUE(r.feasible);
}

TEST(Projection, ZeroLambdaReturnsAnchor) {
  Instance in = single_edge(25);
  const auto r = project(in.theta, in.box, in.table, in.mask, ProjectionConfig{}, 0.0);
  EXPECT_EQ(r.theta_p, in.theta);
  EXPECT_FALSE(r.feasible);
}

TEST(Projection, ReachesClosedFormGap) {
  Instance in = single_edge(25);
  ProjectionConfig cfg;
  cfg.e_p = 5000;
  const auto r = project(in.theta, in.box, in.table, in.mask, cfg, 1.0);
  ASSERT_TRUE(r.feasible);
  const double gap = r.theta_p.values()[0] - r.theta_p.values()[1];
  EXPECT_GE(gap, std::log(3.0) * (1 - 1e-6) - 1e-6);
  EXPECT_LE(softmax_of(r.theta_p.values())[1], 0.25 * (1 + 1e-6));
  EXPECT_EQ(r.trajectory.size(), r.iterations + 1);
}

TEST(Projection, IsDeterministic) {
  Instance in = random_infeasible(9);
  ProjectionConfig cfg;
  cfg.adam.lr = 0.05;
  const auto a = project(in.theta, in.box, in.table, in.mask, cfg, 1.0);
  const auto b = project(in.theta, in.box, in.table, in.mask, cfg, 1.0);
  EXPECT_EQ(a.theta_p, b.theta_p);
  EXPECT_EQ(trajectory_csv(a), trajectory_csv(b));
}

TEST(Projection, FeasibleResultHasNoViolation) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Instance in = random_infeasible(derive_seed(7, s));
    ProjectionConfig cfg;
    cfg.adam.lr = 0.05;
    cfg.e_p = 2000;
    const auto r = project(in.theta, in.box, in.table, in.mask, cfg, 1.0);
    if (!r.feasible) continue;
    EXPECT_TRUE(feasible(expected_cost(r.theta_p, in.table, in.mask), in.box));
    EXPECT_TRUE(r.theta_p.all_finite());
  }
}

TEST(Projection, NonFiniteObjectiveAborts) {
  Instance in = single_edge(25);
  in.theta.values()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(project(in.theta, in.box, in.table, in.mask, ProjectionConfig{}, 1.0), NumericError);
}

TEST(Projection, ConfigValidation) {
  ProjectionConfig cfg;
  cfg.e_p = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda0 = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace rcnas

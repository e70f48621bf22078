// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rcnas/cellgraph.hpp"
#include "rcnas/costmodel.hpp"
#include "rcnas/optim.hpp"

namespace rcnas {

struct ProjectionConfig {
  double lambda0 = 1.0;
  double gamma = 0.98;
  std::size_t e_p = 500;
  AdamConfig adam{};  // lr 3e-4, betas (0.5, 0.999), no weight decay
  double epsilon = 1e-6;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const ProjectionConfig&, const ProjectionConfig&) = default;
};

/// (lambda1_t, lambda2_t) = lambda0 * gamma^t for both multipliers.
std::pair<double, double> decay_lambda(const ProjectionConfig& cfg, std::size_t t);

/// h = 1/2 |anchor - theta_p|^2 + l1 * sum_m max(C_L - Phi, 0) + l2 * sum_m max(Phi - C_H, 0).
double lagrangian(const ArchParams& theta_p, const ArchParams& anchor, const ConstraintBox& box,
                  const CostTable& table, const ScopeMask& mask, double lambda1, double lambda2);
/// Gradient of h; the hinge contributes nothing on its kink.
std::vector<double> lagrangian_gradient(const ArchParams& theta_p, const ArchParams& anchor,
                                        const ConstraintBox& box, const CostTable& table,
                                        const ScopeMask& mask, double lambda1, double lambda2);

struct ProjectionStep {
  std::size_t iteration = 0;
  double h = 0.0;
  CostVector phi{};
  CostVector lower_violation{};
  CostVector upper_violation{};
};

struct ProjectionResult {
  ArchParams theta_p;
  std::size_t iterations = 0;
  CostVector phi{};
  bool feasible = false;
  std::vector<ProjectionStep> trajectory;  // row 0 is the anchor
};

/// Descends h from theta_p = theta with a fresh Adam for at most e_p steps,
/// stopping at the first feasible iterate. Feasible anchors and a zero
/// multiplier return theta unchanged. Throws NumericError if h turns
/// non-finite.
ProjectionResult project(const ArchParams& theta, const ConstraintBox& box, const CostTable& table,
                         const ScopeMask& mask, const ProjectionConfig& cfg, double lambda);

/// CSV: iteration,h,phi_params,phi_flops,lower_params,lower_flops,upper_params,upper_flops.
std::string trajectory_csv(const ProjectionResult& result);

}  // namespace rcnas

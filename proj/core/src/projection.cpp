// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/projection.hpp"

#include <cmath>
#include <sstream>

#include "rcnas/error.hpp"
#include "rcnas/format.hpp"

namespace rcnas {

void ProjectionConfig::validate() const {
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw ConfigError("/projection/lambda0", "must be finite and >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("/projection/gamma", "must be positive");
  if (e_p == 0) throw ConfigError("/projection/e_p", "must be at least 1");
  if (!(adam.lr >= 0.0)) throw ConfigError("/projection/lr", "must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("/projection/beta1", "must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("/projection/beta2", "must lie in [0, 1)");
  if (!(epsilon >= 0.0)) throw ConfigError("/projection/epsilon", "must be >= 0");
}

std::pair<double, double> decay_lambda(const ProjectionConfig& cfg, std::size_t t) {
  const double l = cfg.lambda0 * std::pow(cfg.gamma, static_cast<double>(t));
  return {l, l};
}

namespace {

double distance_sq(const ArchParams& a, const ArchParams& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a.values()[i] - b.values()[i];
    d += diff * diff;
  }
  return d;
}

double penalty(const CostVector& phi, const ConstraintBox& box, double lambda1, double lambda2) {
  const auto [low, high] = violation(phi, box);
  double p = 0.0;
  for (std::size_t m = 0; m < kMetrics; ++m) p += lambda1 * low[m] + lambda2 * high[m];
  return p;
}

}  // namespace

double lagrangian(const ArchParams& theta_p, const ArchParams& anchor, const ConstraintBox& box,
                  const CostTable& table, const ScopeMask& mask, double lambda1, double lambda2) {
  if (theta_p.size() != anchor.size()) throw ShapeError("lagrangian: parameter sizes differ");
  const double dist = 0.5 * distance_sq(theta_p, anchor);
  if (lambda1 == 0.0 && lambda2 == 0.0) return dist;
  return dist + penalty(expected_cost(theta_p, table, mask), box, lambda1, lambda2);
}

std::vector<double> lagrangian_gradient(const ArchParams& theta_p, const ArchParams& anchor,
                                        const ConstraintBox& box, const CostTable& table,
                                        const ScopeMask& mask, double lambda1, double lambda2) {
  if (theta_p.size() != anchor.size()) throw ShapeError("lagrangian: parameter sizes differ");
  std::vector<double> g(theta_p.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = theta_p.values()[i] - anchor.values()[i];
  const CostVector phi = expected_cost(theta_p, table, mask);
  std::array<double, kMetrics> coef{};
  bool active = false;
  for (std::size_t m = 0; m < kMetrics; ++m) {
    if (box.lower[m] > phi[m]) coef[m] -= lambda1;
    if (phi[m] > box.upper[m]) coef[m] += lambda2;
    active = active || coef[m] != 0.0;
  }
  if (!active) return g;
  const auto dphi = cost_gradient(theta_p, table, mask);
  for (std::size_t m = 0; m < kMetrics; ++m) {
    if (coef[m] == 0.0) continue;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef[m] * dphi[m][i];
  }
  return g;
}

ProjectionResult project(const ArchParams& theta, const ConstraintBox& box, const CostTable& table,
                         const ScopeMask& mask, const ProjectionConfig& cfg, double lambda) {
  ProjectionResult result;
  result.theta_p = theta;
  auto record = [&](std::size_t it, const ArchParams& p) {
    ProjectionStep row;
    row.iteration = it;
    row.phi = expected_cost(p, table, mask);
    row.h = lagrangian(p, theta, box, table, mask, lambda, lambda);
    std::tie(row.lower_violation, row.upper_violation) = violation(row.phi, box);
    if (!std::isfinite(row.h)) {
      throw NumericError("projection: non-finite objective at iteration " + std::to_string(it) +
                         " (phi = " + format_double(row.phi[0]) + ", " + format_double(row.phi[1]) + ")");
    }
    result.trajectory.push_back(row);
    result.phi = row.phi;
    return feasible(row.phi, box, cfg.epsilon);
  };
  result.feasible = record(0, theta);
  if (result.feasible || lambda == 0.0) return result;

  Adam adam(cfg.adam);
  for (std::size_t it = 1; it <= cfg.e_p; ++it) {
    const std::vector<double> g = lagrangian_gradient(result.theta_p, theta, box, table, mask, lambda, lambda);
    adam.step(result.theta_p.values(), g);
    result.iterations = it;
    if (record(it, result.theta_p)) {
      result.feasible = true;
      break;
    }
  }
  return result;
}

std::string trajectory_csv(const ProjectionResult& result) {
  std::ostringstream out;
  out << "iteration,h,phi_params,phi_flops,lower_params,lower_flops,upper_params,upper_flops\n";
  for (const ProjectionStep& s : result.trajectory) {
    out << s.iteration << ',' << format_double(s.h) << ',' << format_double(s.phi[0]) << ','
        << format_double(s.phi[1]) << ',' << format_double(s.lower_violation[0]) << ','
        << format_double(s.lower_violation[1]) << ',' << format_double(s.upper_violation[0]) << ','
        << format_double(s.upper_violation[1]) << '\n';
  }
  return out.str();
}

}  // namespace rcnas

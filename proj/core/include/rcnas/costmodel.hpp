// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rcnas/cellgraph.hpp"

namespace rcnas {

inline constexpr std::size_t kMetrics = 2;
/// Indexed by metric: 0 = parameters, 1 = FLOPs (multiply-accumulates).
using CostVector = std::array<double, kMetrics>;
inline constexpr std::array<std::string_view, kMetrics> kMetricNames{"params", "flops"};

struct ConstraintBox {
  CostVector lower{0.0, 0.0};
  CostVector upper{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};

  /// Throws ConfigError unless 0 <= lower <= upper componentwise.
  void validate() const;
  bool unbounded() const;
};

enum class CostScope { kFullDag, kTopK };
std::string_view scope_name(CostScope scope);
std::optional<CostScope> scope_from_name(std::string_view name);

/// Per-slot cost rows u[m][o], summed over every cell (and connection site)
/// that reads the slot, plus the θ-independent stem and classifier costs.
class CostTable {
 public:
  static CostTable build(const NetworkPlan& plan);
  /// Hand-built table over `layout`; rows[m] is in ArchParams layout.
  static CostTable custom(const ArchParams& layout, std::array<std::vector<double>, kMetrics> rows,
                          CostVector fixed = {});

  const CostVector& fixed() const { return fixed_; }
  std::size_t n_slots() const { return slot_offsets_.size(); }
  /// u for metric m on slot s, one entry per op of the slot's template.
  std::span<const double> row(std::size_t slot, std::size_t metric) const;
  /// Content hash of all rows and fixed costs.
  std::uint64_t hash() const;

 private:
  CostVector fixed_{};
  std::vector<std::size_t> slot_offsets_;
  std::vector<std::size_t> slot_sizes_;
  std::array<std::vector<double>, kMetrics> rows_;
};

/// Per slot: whether the edge is inside the cost scope.
using ScopeMask = std::vector<bool>;

/// FullDag: every slot. TopK: the edges derive_discrete would keep under
/// `theta`, plus the connection slot.
ScopeMask scope_mask(const ArchParams& theta, const NetworkPlan& plan, CostScope scope);

/// Phi^m = fixed^m + sum over in-scope slots of u^m . softmax(theta_slot).
CostVector expected_cost(const ArchParams& theta, const CostTable& table, const ScopeMask& mask);
/// dPhi^m / dtheta in ArchParams layout, one vector per metric.
std::array<std::vector<double>, kMetrics> cost_gradient(const ArchParams& theta, const CostTable& table,
                                                        const ScopeMask& mask);

/// Costs of the stacked discrete network, including stem, classifier and
/// connection cells. params equals Network::discrete(...).weight_count().
CostVector exact_cost(const DiscreteArch& arch, const NetworkPlan& plan);

/// (max(C_L - phi, 0), max(phi - C_H, 0)) componentwise.
std::pair<CostVector, CostVector> violation(const CostVector& phi, const ConstraintBox& box);
/// Inside the box up to relative slack eps on each bound.
bool feasible(const CostVector& phi, const ConstraintBox& box, double eps = 1e-6);

/// CSV with header metric,expected,exact,C_L,C_H,violation.
std::string cost_report_csv(const CostVector& expected, const CostVector& exact, const ConstraintBox& box);

}  // namespace rcnas

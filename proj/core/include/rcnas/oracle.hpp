// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rcnas/cellgraph.hpp"
#include "rcnas/costmodel.hpp"

namespace rcnas {

/// A plan small enough to enumerate: at most 5 nodes, 4 cell ops, 4 cells.
struct MicroSpace {
  NetworkPlan plan;
  std::uint64_t ceiling = 10000;

  /// Throws ConfigError if the plan exceeds the micro limits.
  void validate() const;
};

/// Every choice of nodes for one template: each intermediate node takes a
/// 2-subset of its predecessors (lexicographic) and one non-Zero op per kept
/// edge (op-set order). Later nodes vary fastest.
std::vector<std::vector<NodeChoice>> enumerate_cell(const CellTemplate& t);
/// Length of enumerate_cell(t) computed by counting choices.
std::uint64_t cell_arch_count(const CellTemplate& t);
/// Product of cell_arch_count over the plan's kinds.
std::uint64_t space_arch_count(const NetworkPlan& plan);

/// Calls `fn` for every architecture of the space, exactly once, in canonical
/// order (mixed radix over plan.kinds(), the last kind fastest). Throws
/// ConfigError reporting the count if it exceeds the ceiling.
void for_each_arch(const MicroSpace& space, const std::function<void(const DiscreteArch&)>& fn);
std::vector<DiscreteArch> enumerate_archs(const MicroSpace& space);

/// Stable identifier: FNV-1a of the canonical arch JSON, as 16 hex digits.
std::string arch_hash(const DiscreteArch& arch);

struct ScoredArch {
  CostVector cost{};
  double score = 0.0;
};

/// Indices (ascending) of candidates that no other candidate dominates: all
/// costs <= and score >=, at least one strict.
std::vector<std::size_t> pareto_front(const std::vector<ScoredArch>& candidates);

}  // namespace rcnas

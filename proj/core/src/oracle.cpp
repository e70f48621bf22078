// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/oracle.hpp"

#include <algorithm>
#include <numeric>

#include "rcnas/arch_io.hpp"
#include "rcnas/error.hpp"
#include "rcnas/format.hpp"

namespace rcnas {

void MicroSpace::validate() const {
  plan.validate();
  if (plan.n_nodes > 5) throw ConfigError("/plan/nodes", "micro spaces allow at most 5 nodes");
  if (plan.cell_ops.size() > 4) throw ConfigError("/plan/op_set", "micro spaces allow at most 4 ops");
  if (plan.n_cells > 4) throw ConfigError("/plan/cells", "micro spaces allow at most 4 cells");
  if (ceiling == 0) throw ConfigError("/oracle/ceiling", "must be positive");
}

namespace {

std::vector<OpKind> nonzero_ops(const CellTemplate& t) {
  std::vector<OpKind> ops;
  for (OpKind op : t.ops()) {
    if (op != OpKind::kZero) ops.push_back(op);
  }
  return ops;
}

// All choices for one node: predecessor subsets of size `keep`, then ops.
std::vector<NodeChoice> node_choices(const CellTemplate& t, std::size_t node) {
  const std::vector<OpKind> ops = nonzero_ops(t);
  std::vector<std::vector<std::size_t>> subsets;
  if (t.kept_predecessors(node) == 1) {
    for (std::size_t a = 0; a < node; ++a) subsets.push_back({a});
  } else {
    for (std::size_t a = 0; a < node; ++a) {
      for (std::size_t b = a + 1; b < node; ++b) subsets.push_back({a, b});
    }
  }
  std::vector<NodeChoice> out;
  for (const auto& subset : subsets) {
    std::vector<std::size_t> digit(subset.size(), 0);
    while (true) {
      NodeChoice nc{node, {}};
      for (std::size_t k = 0; k < subset.size(); ++k) nc.inputs.push_back({subset[k], ops[digit[k]]});
      out.push_back(std::move(nc));
      std::size_t k = subset.size();
      while (k > 0 && ++digit[k - 1] == ops.size()) digit[--k] = 0;
      if (k == 0) break;
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<NodeChoice>> enumerate_cell(const CellTemplate& t) {
  std::vector<std::vector<NodeChoice>> per_node;
  for (std::size_t node : t.intermediates()) per_node.push_back(node_choices(t, node));
  std::vector<std::vector<NodeChoice>> out;
  std::vector<std::size_t> digit(per_node.size(), 0);
  while (true) {
    std::vector<NodeChoice> cell;
    for (std::size_t n = 0; n < per_node.size(); ++n) cell.push_back(per_node[n][digit[n]]);
    out.push_back(std::move(cell));
    std::size_t k = per_node.size();
    while (k > 0 && ++digit[k - 1] == per_node[k - 1].size()) digit[--k] = 0;
    if (k == 0) break;
  }
  return out;
}

std::uint64_t cell_arch_count(const CellTemplate& t) {
  std::uint64_t count = 1;
  for (std::size_t node : t.intermediates()) count *= node_choices(t, node).size();
  return count;
}

std::uint64_t space_arch_count(const NetworkPlan& plan) {
  std::uint64_t count = 1;
  for (const CellKind& kind : plan.kinds()) count *= cell_arch_count(plan.template_of(kind));
  return count;
}

void for_each_arch(const MicroSpace& space, const std::function<void(const DiscreteArch&)>& fn) {
  space.validate();
  const std::uint64_t count = space_arch_count(space.plan);
  if (count > space.ceiling) {
    throw ConfigError("/oracle/ceiling", "space holds " + std::to_string(count) +
                                             " architectures, above the ceiling of " +
                                             std::to_string(space.ceiling));
  }
  const std::vector<CellKind> kinds = space.plan.kinds();
  std::vector<std::vector<std::vector<NodeChoice>>> per_kind;
  for (const CellKind& kind : kinds) per_kind.push_back(enumerate_cell(space.plan.template_of(kind)));
  std::vector<std::size_t> digit(kinds.size(), 0);
  while (true) {
    DiscreteArch arch;
    for (std::size_t k = 0; k < kinds.size(); ++k) arch.cells.emplace(kinds[k], per_kind[k][digit[k]]);
    fn(arch);
    std::size_t k = kinds.size();
    while (k > 0 && ++digit[k - 1] == per_kind[k - 1].size()) digit[--k] = 0;
    if (k == 0) break;
  }
}

std::vector<DiscreteArch> enumerate_archs(const MicroSpace& space) {
  std::vector<DiscreteArch> out;
  for_each_arch(space, [&](const DiscreteArch& a) { out.push_back(a); });
  return out;
}

std::string arch_hash(const DiscreteArch& arch) {
  return hex64(fnv1a(arch_to_json(arch).dump()));
}

std::vector<std::size_t> pareto_front(const std::vector<ScoredArch>& candidates) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  // Lexicographic (costs ascending, score descending): any dominator of a
  // candidate sorts strictly before it.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const ScoredArch& x = candidates[a];
    const ScoredArch& y = candidates[b];
    if (x.cost != y.cost) return x.cost < y.cost;
    return x.score > y.score;
  });
  auto dominates = [](const ScoredArch& a, const ScoredArch& b) {
    bool strict = a.score > b.score;
    if (a.score < b.score) return false;
    for (std::size_t m = 0; m < kMetrics; ++m) {
      if (a.cost[m] > b.cost[m]) return false;
      strict = strict || a.cost[m] < b.cost[m];
    }
    return strict;
  };
  std::vector<std::size_t> front;
  for (std::size_t i : order) {
    bool dominated = false;
    for (std::size_t f : front) {
      if (dominates(candidates[f], candidates[i])) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(i);
  }
  std::sort(front.begin(), front.end());
  return front;
}

}  // namespace rcnas

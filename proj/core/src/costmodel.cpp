// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/costmodel.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "rcnas/error.hpp"
#include "rcnas/format.hpp"
#include "rcnas/network.hpp"

namespace rcnas {

void ConstraintBox::validate() const {
  for (std::size_t m = 0; m < kMetrics; ++m) {
    const std::string base = "/constraints/" + std::string(kMetricNames[m]);
    if (std::isnan(lower[m]) || lower[m] < 0.0 || std::isinf(lower[m])) {
      throw ConfigError(base + "/lower", "must be finite and non-negative");
    }
    if (std::isnan(upper[m]) || upper[m] < lower[m]) throw ConfigError(base + "/upper", "must be >= lower");
  }
}

bool ConstraintBox::unbounded() const {
  for (std::size_t m = 0; m < kMetrics; ++m) {
    if (lower[m] > 0.0 || std::isfinite(upper[m])) return false;
  }
  return true;
}

std::string_view scope_name(CostScope scope) {
  return scope == CostScope::kTopK ? "topk" : "fulldag";
}

std::optional<CostScope> scope_from_name(std::string_view name) {
  if (name == "topk") return CostScope::kTopK;
  if (name == "fulldag") return CostScope::kFullDag;
  return std::nullopt;
}

namespace {

CostVector op_cost(OpKind kind, const OpContext& ctx) {
  return {static_cast<double>(param_count(kind, ctx)), static_cast<double>(flop_count(kind, ctx))};
}

CostVector fixed_cost(const NetworkPlan& plan) {
  const OpContext stem = stem_context(plan);
  const double c = static_cast<double>(stem.c_out);
  const double stem_weights = static_cast<double>(conv_macs(3, stem.c_in, stem.c_out, 1, 1));
  const double stem_macs = static_cast<double>(conv_macs(3, stem.c_in, stem.c_out, stem.h_out(), stem.w_out()));
  const CellLayout last = plan.layout().back();
  const double f = static_cast<double>(last.out_channels);
  const double k = static_cast<double>(plan.n_classes);
  const double gap = f * static_cast<double>(last.out_spatial * last.out_spatial);
  return {stem_weights + 2.0 * c + f * k + k, stem_macs + gap + f * k};
}

}  // namespace

CostTable CostTable::build(const NetworkPlan& plan) {
  CostTable t;
  const ArchParams layout(plan);
  for (const auto& slot : layout.slots()) {
    t.slot_offsets_.push_back(slot.offset);
    t.slot_sizes_.push_back(slot.size);
  }
  for (auto& r : t.rows_) r.assign(layout.size(), 0.0);
  auto add_site = [&](const EdgeSite& site, const std::vector<OpKind>& ops) {
    const std::size_t s = *layout.find(site.kind, site.edge);
    for (std::size_t o = 0; o < ops.size(); ++o) {
      const CostVector c = op_cost(ops[o], site.ctx);
      for (std::size_t m = 0; m < kMetrics; ++m) t.rows_[m][t.slot_offsets_[s] + o] += c[m];
    }
  };
  for (const CellSites& cs : plan_sites(plan)) {
    add_site(cs.pre0, plan.connection_ops);
    add_site(cs.pre1, plan.connection_ops);
    for (const EdgeSite& es : cs.edges) add_site(es, plan.cell_ops);
  }
  t.fixed_ = fixed_cost(plan);
  return t;
}

CostTable CostTable::custom(const ArchParams& layout, std::array<std::vector<double>, kMetrics> rows,
                            CostVector fixed) {
  CostTable t;
  for (const auto& slot : layout.slots()) {
    t.slot_offsets_.push_back(slot.offset);
    t.slot_sizes_.push_back(slot.size);
  }
  for (std::size_t m = 0; m < kMetrics; ++m) {
    if (rows[m].size() != layout.size()) throw ShapeError("cost rows do not match the parameter layout");
    for (double v : rows[m]) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("/rows", "costs must be finite and non-negative");
    }
  }
  t.rows_ = std::move(rows);
  t.fixed_ = fixed;
  return t;
}

std::span<const double> CostTable::row(std::size_t slot, std::size_t metric) const {
  return std::span<const double>(rows_.at(metric)).subspan(slot_offsets_.at(slot), slot_sizes_.at(slot));
}

std::uint64_t CostTable::hash() const {
  auto bytes = [](const auto& v) {
    return std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(v.data()),
                                          v.size() * sizeof(v[0]));
  };
  std::uint64_t h = fnv1a(bytes(fixed_));
  for (const auto& r : rows_) h = fnv1a(bytes(r), h);
  h = fnv1a(bytes(slot_offsets_), h);
  return fnv1a(bytes(slot_sizes_), h);
}

ScopeMask scope_mask(const ArchParams& theta, const NetworkPlan& plan, CostScope scope) {
  ScopeMask mask(theta.slots().size(), true);
  if (scope == CostScope::kFullDag) return mask;
  const auto kept = select_predecessors(theta, plan);
  for (std::size_t s = 0; s < theta.slots().size(); ++s) {
    const auto& slot = theta.slots()[s];
    mask[s] = kept.at(slot.kind).at(slot.edge);
  }
  return mask;
}

namespace {

void check_layout(const ArchParams& theta, const CostTable& table, const ScopeMask& mask) {
  if (table.n_slots() != theta.slots().size() || mask.size() != theta.slots().size()) {
    throw ShapeError("cost table, scope and architecture parameters describe different spaces");
  }
}

}  // namespace

CostVector expected_cost(const ArchParams& theta, const CostTable& table, const ScopeMask& mask) {
  check_layout(theta, table, mask);
  CostVector phi = table.fixed();
  for (std::size_t s = 0; s < mask.size(); ++s) {
    if (!mask[s]) continue;
    const std::vector<double> f = softmax_of(theta.logits(s));
    for (std::size_t m = 0; m < kMetrics; ++m) {
      const auto u = table.row(s, m);
      double acc = 0.0;
      for (std::size_t o = 0; o < f.size(); ++o) acc += u[o] * f[o];
      phi[m] += acc;
    }
  }
  return phi;
}

std::array<std::vector<double>, kMetrics> cost_gradient(const ArchParams& theta, const CostTable& table,
                                                        const ScopeMask& mask) {
  check_layout(theta, table, mask);
  std::array<std::vector<double>, kMetrics> grad;
  for (auto& g : grad) g.assign(theta.size(), 0.0);
  for (std::size_t s = 0; s < mask.size(); ++s) {
    if (!mask[s]) continue;
    const std::size_t off = theta.slots()[s].offset;
    const std::vector<double> f = softmax_of(theta.logits(s));
    for (std::size_t m = 0; m < kMetrics; ++m) {
      const auto u = table.row(s, m);
      double mean = 0.0;
      for (std::size_t o = 0; o < f.size(); ++o) mean += u[o] * f[o];
      for (std::size_t o = 0; o < f.size(); ++o) grad[m][off + o] = f[o] * (u[o] - mean);
    }
  }
  return grad;
}

CostVector exact_cost(const DiscreteArch& arch, const NetworkPlan& plan) {
  validate_arch(arch, plan);
  CostVector total = fixed_cost(plan);
  auto add = [&](OpKind op, const OpContext& ctx) {
    const CostVector c = op_cost(op, ctx);
    for (std::size_t m = 0; m < kMetrics; ++m) total[m] += c[m];
  };
  const OpKind conn = arch.cells.at(CellKind::connection()).at(0).inputs.at(0).op;
  for (const CellSites& cs : plan_sites(plan)) {
    add(conn, cs.pre0.ctx);
    add(conn, cs.pre1.ctx);
    const CellTemplate t = plan.template_of(cs.kind);
    for (const NodeChoice& nc : arch.cells.at(cs.kind)) {
      for (const ChosenInput& in : nc.inputs) add(in.op, cs.edges[t.edge_index(in.from, nc.node)].ctx);
    }
  }
  return total;
}

std::pair<CostVector, CostVector> violation(const CostVector& phi, const ConstraintBox& box) {
  CostVector low{}, high{};
  for (std::size_t m = 0; m < kMetrics; ++m) {
    low[m] = std::max(box.lower[m] - phi[m], 0.0);
    high[m] = std::max(phi[m] - box.upper[m], 0.0);
  }
  return {low, high};
}

bool feasible(const CostVector& phi, const ConstraintBox& box, double eps) {
  for (std::size_t m = 0; m < kMetrics; ++m) {
    if (phi[m] < box.lower[m] * (1.0 - eps)) return false;
    if (phi[m] > box.upper[m] * (1.0 + eps)) return false;
  }
  return true;
}

std::string cost_report_csv(const CostVector& expected, const CostVector& exact, const ConstraintBox& box) {
  std::ostringstream out;
  out << "metric,expected,exact,C_L,C_H,violation\n";
  const auto [low, high] = violation(expected, box);
  for (std::size_t m = 0; m < kMetrics; ++m) {
    out << kMetricNames[m] << ',' << format_double(expected[m]) << ',' << format_double(exact[m]) << ','
        << format_double(box.lower[m]) << ',' << format_double(box.upper[m]) << ','
        << format_double(low[m] + high[m]) << '\n';
  }
  return out.str();
}

}  // namespace rcnas

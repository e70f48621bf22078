// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/cellgraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rcnas/error.hpp"
#include "rcnas/primitives.hpp"

namespace rcnas {

std::string CellKind::name() const {
  switch (type) {
    case Type::kNormal:
      return "normal" + std::to_string(level);
    case Type::kReduction:
      return "reduction";
    case Type::kConnection:
      return "connection";
  }
  return "unknown";
}

std::optional<CellKind> CellKind::parse(std::string_view name) {
  if (name == "reduction") return reduction();
  if (name == "connection") return connection();
  constexpr std::string_view prefix = "normal";
  if (name.size() > prefix.size() && name.substr(0, prefix.size()) == prefix) {
    std::size_t level = 0;
    for (char ch : name.substr(prefix.size())) {
      if (ch < '0' || ch > '9') return std::nullopt;
      level = level * 10 + static_cast<std::size_t>(ch - '0');
    }
    return normal(level);
  }
  return std::nullopt;
}

namespace {

void check_op_list(const std::vector<OpKind>& ops, bool connection, const std::string& path) {
  if (ops.empty()) throw ConfigError(path, "operation set is empty");
  std::set<OpKind> seen;
  bool has_nonzero = false;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const OpKind op = ops[i];
    const std::string where = path + "/" + std::to_string(i);
    if (!seen.insert(op).second) throw ConfigError(where, "duplicate operation");
    if (connection && !is_connection_op(op)) {
      throw ConfigError(where, std::string(op_name(op)) + " is not a connection-cell operation");
    }
    if (!connection && !is_cell_op(op)) {
      throw ConfigError(where, std::string(op_name(op)) + " is not a normal/reduction operation");
    }
    has_nonzero = has_nonzero || op != OpKind::kZero;
  }
  if (!has_nonzero) throw ConfigError(path, "operation set needs at least one non-zero op");
}

}  // namespace

CellTemplate CellTemplate::cell(std::size_t n_nodes, std::vector<OpKind> ops) {
  if (n_nodes < 4) {
    throw ConfigError("nodes", "a cell needs two inputs, an output and at least one "
                               "intermediate node (got " + std::to_string(n_nodes) + " nodes)");
  }
  check_op_list(ops, false, "ops");
  CellTemplate t;
  t.n_nodes_ = n_nodes;
  t.ops_ = std::move(ops);
  for (std::size_t j = 2; j + 1 < n_nodes; ++j) {
    for (std::size_t i = 0; i < j; ++i) t.edges_.push_back({i, j});
  }
  return t;
}

CellTemplate CellTemplate::connection(std::vector<OpKind> ops) {
  check_op_list(ops, true, "connection_ops");
  CellTemplate t;
  t.connection_ = true;
  t.n_nodes_ = 2;
  t.ops_ = std::move(ops);
  t.edges_.push_back({0, 1});
  return t;
}

std::vector<std::size_t> CellTemplate::intermediates() const {
  std::vector<std::size_t> nodes;
  if (connection_) return {1};
  for (std::size_t j = 2; j + 1 < n_nodes_; ++j) nodes.push_back(j);
  return nodes;
}

std::size_t CellTemplate::edge_index(std::size_t from, std::size_t to) const {
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (edges_[e].from == from && edges_[e].to == to) return e;
  }
  throw Error("cell template has no edge (" + std::to_string(from) + ", " + std::to_string(to) + ")");
}

std::vector<std::size_t> CellTemplate::edges_into(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (edges_[e].to == node) out.push_back(e);
  }
  return out;
}

std::size_t CellTemplate::kept_predecessors(std::size_t node) const {
  return std::min<std::size_t>(2, edges_into(node).size());
}

std::optional<std::size_t> CellTemplate::zero_index() const {
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (ops_[i] == OpKind::kZero) return i;
  }
  return std::nullopt;
}

void NetworkPlan::validate() const {
  if (n_cells == 0) throw ConfigError("/plan/cells", "must be positive");
  if (init_channels == 0) throw ConfigError("/plan/init_channels", "must be positive");
  if (n_nodes < 4) {
    throw ConfigError("/plan/nodes", "a cell needs at least one intermediate node (nodes >= 4)");
  }
  if (levels == 0) throw ConfigError("/plan/levels", "must be positive");
  if (input_channels == 0) throw ConfigError("/plan/input_channels", "must be positive");
  if (image_size < 2) throw ConfigError("/plan/image_size", "must be at least 2");
  if (n_classes < 2) throw ConfigError("/plan/classes", "must be at least 2");
  check_op_list(cell_ops, false, "/plan/op_set");
  check_op_list(connection_ops, true, "/plan/connection_op_set");
  for (OpKind op : connection_ops) {
    const std::size_t g = op == OpKind::kGroupConv1x1G4 ? 4 : op == OpKind::kGroupConv1x1G2 ? 2 : 1;
    if (init_channels % g != 0) {
      throw ConfigError("/plan/init_channels", "must be divisible by " + std::to_string(g) +
                                                   " for " + std::string(op_name(op)));
    }
  }
  const bool has_identity =
      std::find(cell_ops.begin(), cell_ops.end(), OpKind::kIdentity) != cell_ops.end();
  if (has_identity) {
    for (const CellLayout& cl : layout()) {
      if (cl.reduction && (cl.spatial % 2 != 0 || cl.channels % 2 != 0)) {
        throw ConfigError("/plan/image_size",
                          "reduction cells with identity need even spatial size and channels");
      }
    }
  }
}

bool NetworkPlan::is_reduction(std::size_t cell) const {
  return cell == n_cells / 3 || cell == 2 * n_cells / 3;
}

CellKind NetworkPlan::kind_of(std::size_t cell) const {
  if (is_reduction(cell)) return CellKind::reduction();
  std::size_t n_normal = 0, index = 0;
  for (std::size_t i = 0; i < n_cells; ++i) {
    if (is_reduction(i)) continue;
    if (i < cell) ++index;
    ++n_normal;
  }
  return CellKind::normal(index * levels / n_normal);
}

std::vector<CellKind> NetworkPlan::kinds() const {
  std::set<CellKind> kinds;
  for (std::size_t i = 0; i < n_cells; ++i) kinds.insert(kind_of(i));
  kinds.insert(CellKind::connection());
  return {kinds.begin(), kinds.end()};
}

CellTemplate NetworkPlan::template_of(const CellKind& kind) const {
  if (kind.type == CellKind::Type::kConnection) return CellTemplate::connection(connection_ops);
  return CellTemplate::cell(n_nodes, cell_ops);
}

std::vector<CellLayout> NetworkPlan::layout() const {
  std::vector<CellLayout> cells;
  std::size_t c_pp = init_channels, c_p = init_channels, c_curr = init_channels;
  std::size_t h_pp = image_size, h_p = image_size;
  for (std::size_t i = 0; i < n_cells; ++i) {
    CellLayout cl;
    cl.kind = kind_of(i);
    cl.reduction = is_reduction(i);
    if (cl.reduction) c_curr *= 2;
    cl.channels = c_curr;
    cl.spatial = h_p;
    cl.s0_channels = c_pp;
    cl.s0_spatial = h_pp;
    cl.s1_channels = c_p;
    cl.s1_spatial = h_p;
    cl.out_channels = n_intermediates() * c_curr;
    cl.out_spatial = cl.reduction ? (h_p - 1) / 2 + 1 : h_p;
    cells.push_back(cl);
    c_pp = c_p;
    h_pp = h_p;
    c_p = cl.out_channels;
    h_p = cl.out_spatial;
  }
  return cells;
}

ArchParams::ArchParams(const NetworkPlan& plan) {
  for (const CellKind& kind : plan.kinds()) {
    const CellTemplate t = plan.template_of(kind);
    for (std::size_t e = 0; e < t.edges().size(); ++e) {
      slots_.push_back(Slot{kind, e, t.edges()[e], values_.size(), t.ops().size()});
      values_.resize(values_.size() + t.ops().size(), 0.0);
    }
  }
}

ArchParams ArchParams::with_slots(const std::vector<std::size_t>& slot_sizes) {
  ArchParams theta;
  for (std::size_t i = 0; i < slot_sizes.size(); ++i) {
    if (slot_sizes[i] == 0) throw ShapeError("slot " + std::to_string(i) + " has no logits");
    theta.slots_.push_back(Slot{CellKind::normal(0), i, {0, 0}, theta.values_.size(), slot_sizes[i]});
    theta.values_.resize(theta.values_.size() + slot_sizes[i], 0.0);
  }
  return theta;
}

ArchParams ArchParams::random(const NetworkPlan& plan, Rng& rng, double scale) {
  ArchParams theta(plan);
  for (double& v : theta.values_) v = scale * normal(rng);
  return theta;
}

std::optional<std::size_t> ArchParams::find(const CellKind& kind, std::size_t edge) const {
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slots_[s].kind == kind && slots_[s].edge == edge) return s;
  }
  return std::nullopt;
}

std::span<double> ArchParams::logits(std::size_t slot) {
  const Slot& s = slots_.at(slot);
  return std::span<double>(values_).subspan(s.offset, s.size);
}

std::span<const double> ArchParams::logits(std::size_t slot) const {
  const Slot& s = slots_.at(slot);
  return std::span<const double>(values_).subspan(s.offset, s.size);
}

bool ArchParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void validate_arch(const DiscreteArch& arch, const NetworkPlan& plan) {
  const std::vector<CellKind> kinds = plan.kinds();
  for (const auto& [kind, nodes] : arch.cells) {
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
      throw ConfigError("/cells/" + kind.name(), "kind is not instantiated by the plan");
    }
  }
  for (const CellKind& kind : kinds) {
    const std::string base = "/cells/" + kind.name();
    auto it = arch.cells.find(kind);
    if (it == arch.cells.end()) throw ConfigError(base, "missing cell kind");
    const CellTemplate t = plan.template_of(kind);
    const std::vector<std::size_t> inter = t.intermediates();
    if (it->second.size() != inter.size()) {
      throw ConfigError(base, "expected " + std::to_string(inter.size()) + " intermediate nodes, got " +
                                  std::to_string(it->second.size()));
    }
    for (std::size_t n = 0; n < inter.size(); ++n) {
      const NodeChoice& nc = it->second[n];
      const std::string npath = base + "/" + std::to_string(n);
      if (nc.node != inter[n]) {
        throw ConfigError(npath + "/node", "expected node " + std::to_string(inter[n]));
      }
      const std::size_t want = t.kept_predecessors(nc.node);
      if (nc.inputs.size() != want) {
        throw ConfigError(npath + "/inputs", "expected " + std::to_string(want) + " inputs");
      }
      for (std::size_t k = 0; k < nc.inputs.size(); ++k) {
        const ChosenInput& in = nc.inputs[k];
        const std::string ipath = npath + "/inputs/" + std::to_string(k);
        if (in.from >= nc.node) throw ConfigError(ipath + "/from", "predecessor must precede node");
        if (k > 0 && in.from <= nc.inputs[k - 1].from) {
          throw ConfigError(ipath + "/from", "predecessors must be distinct and ascending");
        }
        if (in.op == OpKind::kZero) throw ConfigError(ipath + "/op", "zero cannot be chosen");
        if (std::find(t.ops().begin(), t.ops().end(), in.op) == t.ops().end()) {
          throw ConfigError(ipath + "/op",
                            std::string(op_name(in.op)) + " is not in the kind's operation set");
        }
      }
    }
  }
}

std::vector<double> softmax_of(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

Tensor mixed_edge_forward(Tape& tape, const Tensor& theta_edge, const Tensor& x,
                          std::span<const OpInstance> ops) {
  if (theta_edge.numel() != ops.size()) {
    throw ShapeError("mixed edge: " + std::to_string(theta_edge.numel()) + " logits for " +
                     std::to_string(ops.size()) + " operations");
  }
  Tensor weights = prim::softmax(tape, theta_edge);
  std::vector<Tensor> outs;
  outs.reserve(ops.size());
  for (const OpInstance& op : ops) outs.push_back(op.apply(tape, x, false));
  return prim::weighted_sum(tape, weights, outs);
}

double edge_strength(std::span<const double> theta, std::optional<std::size_t> zero_index) {
  const std::vector<double> w = softmax_of(theta);
  double best = 0.0;
  for (std::size_t o = 0; o < w.size(); ++o) {
    if (zero_index && o == *zero_index) continue;
    best = std::max(best, w[o]);
  }
  return best;
}

std::map<CellKind, std::vector<bool>> select_predecessors(const ArchParams& theta,
                                                          const NetworkPlan& plan) {
  std::map<CellKind, std::vector<bool>> kept;
  for (const CellKind& kind : plan.kinds()) {
    const CellTemplate t = plan.template_of(kind);
    std::vector<bool> mask(t.edges().size(), false);
    for (std::size_t node : t.intermediates()) {
      std::vector<std::pair<double, std::size_t>> ranked;  // (strength, edge)
      for (std::size_t e : t.edges_into(node)) {
        auto slot = theta.find(kind, e);
        if (!slot) throw Error("architecture parameters lack " + kind.name() + " edge " + std::to_string(e));
        const auto logits = theta.logits(*slot);
        for (double v : logits) {
          if (!std::isfinite(v)) {
            throw NumericError("edge strength undefined: non-finite logit on " + kind.name() +
                               " edge " + std::to_string(e));
          }
        }
        ranked.emplace_back(edge_strength(logits, t.zero_index()), e);
      }
      // Edges into a node are ordered by source, so a stable sort breaks
      // strength ties toward the smaller predecessor.
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t k = 0; k < t.kept_predecessors(node); ++k) mask[ranked[k].second] = true;
    }
    kept.emplace(kind, std::move(mask));
  }
  return kept;
}

DiscreteArch derive_discrete(const ArchParams& theta, const NetworkPlan& plan) {
  const auto kept = select_predecessors(theta, plan);
  DiscreteArch arch;
  for (const CellKind& kind : plan.kinds()) {
    const CellTemplate t = plan.template_of(kind);
    const std::vector<bool>& mask = kept.at(kind);
    std::vector<NodeChoice> nodes;
    for (std::size_t node : t.intermediates()) {
      NodeChoice nc{node, {}};
      for (std::size_t e : t.edges_into(node)) {
        if (!mask[e]) continue;
        const auto logits = theta.logits(*theta.find(kind, e));
        std::optional<std::size_t> best;
        for (std::size_t o = 0; o < logits.size(); ++o) {
          if (t.ops()[o] == OpKind::kZero) continue;
          if (!best || logits[o] > logits[*best]) best = o;
        }
        nc.inputs.push_back({t.edges()[e].from, t.ops()[*best]});
      }
      nodes.push_back(std::move(nc));
    }
    arch.cells.emplace(kind, std::move(nodes));
  }
  return arch;
}

ArchParams saturated_theta(const DiscreteArch& arch, const NetworkPlan& plan, double magnitude) {
  validate_arch(arch, plan);
  ArchParams theta(plan);
  for (const auto& [kind, nodes] : arch.cells) {
    const CellTemplate t = plan.template_of(kind);
    const auto zero = t.zero_index();
    for (std::size_t e = 0; e < t.edges().size(); ++e) {
      auto logits = theta.logits(*theta.find(kind, e));
      if (zero) logits[*zero] = magnitude;
    }
    for (const NodeChoice& nc : nodes) {
      for (const ChosenInput& in : nc.inputs) {
        auto logits = theta.logits(*theta.find(kind, t.edge_index(in.from, nc.node)));
        std::fill(logits.begin(), logits.end(), 0.0);
        const auto pos = std::find(t.ops().begin(), t.ops().end(), in.op) - t.ops().begin();
        logits[static_cast<std::size_t>(pos)] = magnitude;
      }
    }
  }
  return theta;
}

}  // namespace rcnas

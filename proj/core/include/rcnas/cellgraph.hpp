// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcnas/opset.hpp"
#include "rcnas/rng.hpp"
#include "rcnas/tape.hpp"
#include "rcnas/tensor.hpp"

namespace rcnas {

/// Which architecture-parameter slice a cell reads. Normal cells are split
/// into depth levels; all cells of one kind share logits.
struct CellKind {
  enum class Type { kNormal, kReduction, kConnection };
  Type type = Type::kNormal;
  std::size_t level = 0;

  static CellKind normal(std::size_t level) { return {Type::kNormal, level}; }
  static CellKind reduction() { return {Type::kReduction, 0}; }
  static CellKind connection() { return {Type::kConnection, 0}; }

  /// "normal<level>", "reduction" or "connection".
  std::string name() const;
  static std::optional<CellKind> parse(std::string_view name);

  auto operator<=>(const CellKind&) const = default;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// DAG of a cell. Normal/reduction: nodes 0 and 1 are inputs, 2..N-2
/// intermediates, N-1 the output (channel concat of the intermediates), with a
/// candidate edge (i, j) for every i < j and intermediate j. Connection: one
/// input node 0 and one intermediate node 1, which is also the output.
class CellTemplate {
 public:
  static CellTemplate cell(std::size_t n_nodes, std::vector<OpKind> ops);
  static CellTemplate connection(std::vector<OpKind> ops);

  bool is_connection() const { return connection_; }
  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t n_inputs() const { return connection_ ? 1 : 2; }
  const std::vector<OpKind>& ops() const { return ops_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::vector<std::size_t> intermediates() const;
  std::size_t output_node() const { return connection_ ? 1 : n_nodes_ - 1; }

  /// Index of edge (from, to) in edges(); throws if absent.
  std::size_t edge_index(std::size_t from, std::size_t to) const;
  /// Indices into edges() of the candidate edges entering `node`, by source.
  std::vector<std::size_t> edges_into(std::size_t node) const;
  /// Number of predecessors kept at derivation: min(2, candidates).
  std::size_t kept_predecessors(std::size_t node) const;
  std::optional<std::size_t> zero_index() const;

 private:
  bool connection_ = false;
  std::size_t n_nodes_ = 0;
  std::vector<OpKind> ops_;
  std::vector<Edge> edges_;
};

/// Shapes seen by one cell in the stacked network.
struct CellLayout {
  CellKind kind;
  bool reduction = false;
  std::size_t channels = 0;      // per node inside the cell
  std::size_t spatial = 0;       // input nodes' spatial size
  std::size_t s0_channels = 0;   // raw input from two cells back
  std::size_t s0_spatial = 0;
  std::size_t s1_channels = 0;   // raw input from the previous cell
  std::size_t s1_spatial = 0;
  std::size_t out_channels = 0;
  std::size_t out_spatial = 0;
};

/// Macro structure: stem (3x3 conv + BN), L cells with reductions at
/// floor(L/3) and floor(2L/3), a learned connection cell on each of a cell's
/// two inputs, then global-average-pool and a linear classifier.
struct NetworkPlan {
  std::size_t n_cells = 8;
  std::size_t init_channels = 16;
  std::size_t n_nodes = 7;
  std::size_t levels = 3;
  std::vector<OpKind> cell_ops = default_cell_ops();
  std::vector<OpKind> connection_ops = default_connection_ops();
  std::size_t input_channels = 3;
  std::size_t image_size = 16;
  std::size_t n_classes = 4;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool is_reduction(std::size_t cell) const;
  CellKind kind_of(std::size_t cell) const;
  /// Instantiated kinds in canonical order; connection is always present.
  std::vector<CellKind> kinds() const;
  CellTemplate template_of(const CellKind& kind) const;
  std::vector<CellLayout> layout() const;
  std::size_t n_intermediates() const { return n_nodes - 3; }

  friend bool operator==(const NetworkPlan&, const NetworkPlan&) = default;
};

/// One logit vector per (kind, edge), stored contiguously.
class ArchParams {
 public:
  struct Slot {
    CellKind kind;
    std::size_t edge = 0;  // index into the kind's template edges()
    Edge endpoints;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  ArchParams() = default;
  /// All-zero logits for every instantiated kind of `plan`.
  explicit ArchParams(const NetworkPlan& plan);
  /// Free-standing layout: slot i is edge i of normal level 0 with
  /// slot_sizes[i] zero logits. For hand-built cost instances.
  static ArchParams with_slots(const std::vector<std::size_t>& slot_sizes);
  /// Logits drawn i.i.d. from N(0, scale^2).
  static ArchParams random(const NetworkPlan& plan, Rng& rng, double scale = 1e-3);

  const std::vector<Slot>& slots() const { return slots_; }
  std::optional<std::size_t> find(const CellKind& kind, std::size_t edge) const;
  std::span<double> logits(std::size_t slot);
  std::span<const double> logits(std::size_t slot) const;
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool all_finite() const;

  friend bool operator==(const ArchParams& a, const ArchParams& b) { return a.values_ == b.values_; }

 private:
  std::vector<Slot> slots_;
  std::vector<double> values_;
};

struct ChosenInput {
  std::size_t from = 0;
  OpKind op = OpKind::kZero;
  friend bool operator==(const ChosenInput&, const ChosenInput&) = default;
};

struct NodeChoice {
  std::size_t node = 0;
  std::vector<ChosenInput> inputs;  // sorted by predecessor
  friend bool operator==(const NodeChoice&, const NodeChoice&) = default;
};

/// Discretized architecture: per kind, each intermediate node's retained
/// predecessors and the op on each retained edge.
struct DiscreteArch {
  std::map<CellKind, std::vector<NodeChoice>> cells;
  friend bool operator==(const DiscreteArch&, const DiscreteArch&) = default;
};

/// Throws ConfigError if `arch` does not fit `plan` (kinds, nodes, ops, Zero,
/// predecessor counts and ordering).
void validate_arch(const DiscreteArch& arch, const NetworkPlan& plan);

/// Softmax-weighted sum of the candidate ops applied to x.
Tensor mixed_edge_forward(Tape& tape, const Tensor& theta_edge, const Tensor& x,
                          std::span<const OpInstance> ops);

/// max over non-Zero ops of softmax(theta)_o; with no Zero op, the max weight.
double edge_strength(std::span<const double> theta, std::optional<std::size_t> zero_index);

std::vector<double> softmax_of(std::span<const double> logits);

/// Per kind, per edge: whether the edge is among its target node's strongest
/// predecessors (top-2 by strength, ties to the smaller source index).
std::map<CellKind, std::vector<bool>> select_predecessors(const ArchParams& theta,
                                                          const NetworkPlan& plan);

/// Keeps the two strongest predecessors per node, then the argmax non-Zero op
/// per kept edge (ties to the smaller op index).
DiscreteArch derive_discrete(const ArchParams& theta, const NetworkPlan& plan);

/// Logits that select `arch` when pushed through derive_discrete: `magnitude`
/// on the chosen op of kept edges, and on Zero (or nothing) elsewhere.
ArchParams saturated_theta(const DiscreteArch& arch, const NetworkPlan& plan,
                           double magnitude = 40.0);

}  // namespace rcnas

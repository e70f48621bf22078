// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rcnas/cellgraph.hpp"
#include "rcnas/opset.hpp"
#include "rcnas/tape.hpp"
#include "rcnas/tensor.hpp"

namespace rcnas {

/// One learned edge of the stacked network and the shape it runs at.
struct EdgeSite {
  CellKind kind;
  std::size_t edge = 0;  // index into the kind's template edges()
  Edge endpoints;
  OpContext ctx;
};

/// The learned edges of cell `cell`: its two connection cells (on s0 and s1)
/// and its template edges in template order.
struct CellSites {
  std::size_t cell = 0;
  CellKind kind;
  EdgeSite pre0;
  EdgeSite pre1;
  std::vector<EdgeSite> edges;
};

std::vector<CellSites> plan_sites(const NetworkPlan& plan);
/// Stem conv context: input_channels -> init_channels at image_size.
OpContext stem_context(const NetworkPlan& plan);
/// Channels reaching the classifier.
std::size_t classifier_inputs(const NetworkPlan& plan);

/// One differentiable tensor per ArchParams slot.
class ThetaTensors {
 public:
  ThetaTensors(const ArchParams& theta, bool requires_grad);

  std::size_t size() const { return slots_.size(); }
  const Tensor& slot(std::size_t s) const { return slots_.at(s); }
  /// Flat gradient in ArchParams layout; zeros where no gradient flowed.
  std::vector<double> gradient() const;
  /// True if any slot holds a gradient buffer.
  bool any_grad() const;

 private:
  std::vector<Tensor> slots_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

struct ForwardOptions {
  /// Per cell: whether its mixtures read θ through the gradient path. Cells
  /// marked false read detached copies. Null means all attached.
  const std::vector<bool>* theta_grad_cells = nullptr;
  /// Receives, per cell, the mixture weights of every learned edge in the
  /// order pre0, pre1, template edges.
  std::vector<std::vector<std::vector<double>>>* weights_out = nullptr;
};

/// The stacked network: stem, cells, classifier. A supernet evaluates every
/// candidate op on every edge as a softmax mixture; a discrete network holds
/// only the ops and edges of one DiscreteArch.
class Network {
 public:
  static Network supernet(const NetworkPlan& plan, std::uint64_t seed);
  static Network discrete(const NetworkPlan& plan, const DiscreteArch& arch, std::uint64_t seed);

  const NetworkPlan& plan() const { return plan_; }
  bool is_supernet() const { return supernet_; }

  /// Registry in build order; names are unique.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t weight_count() const;

  /// images: (N, input_channels, image_size, image_size) -> logits (N, classes).
  /// `theta` is required for a supernet and ignored otherwise.
  Tensor forward(Tape& tape, const Tensor& images, const ThetaTensors* theta,
                 const ForwardOptions& options = {}) const;

 private:
  struct LearnedEdge {
    std::size_t slot = 0;
    std::vector<OpInstance> ops;  // all candidates (supernet) or the chosen one
  };
  struct Cell {
    CellKind kind;
    LearnedEdge pre0;
    LearnedEdge pre1;
    std::vector<std::optional<LearnedEdge>> edges;  // by template edge; empty if dropped
  };

  Tensor edge_forward(Tape& tape, const LearnedEdge& edge, const Tensor& x, const ThetaTensors* theta,
                      bool attach, std::vector<std::vector<double>>* weights) const;

  void init_stem(Rng& rng);
  void init_head(Rng& rng);

  NetworkPlan plan_;
  bool supernet_ = true;
  Parameter stem_weight_, stem_gamma_, stem_beta_;
  std::vector<Cell> cells_;
  Parameter fc_weight_, fc_bias_;
};

}  // namespace rcnas

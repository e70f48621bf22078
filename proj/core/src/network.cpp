// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/network.hpp"

#include <cmath>

#include "rcnas/error.hpp"
#include "rcnas/primitives.hpp"

namespace rcnas {

std::vector<CellSites> plan_sites(const NetworkPlan& plan) {
  plan.validate();
  std::vector<CellSites> sites;
  for (const CellLayout& cl : plan.layout()) {
    CellSites cs;
    cs.cell = sites.size();
    cs.kind = cl.kind;
    const std::size_t s0_stride = cl.s0_spatial == cl.s1_spatial ? 1 : 2;
    if ((cl.s0_spatial - 1) / s0_stride + 1 != cl.s1_spatial) {
      throw ShapeError("cell " + std::to_string(cs.cell) + ": cannot align input spatial sizes " +
                       std::to_string(cl.s0_spatial) + " and " + std::to_string(cl.s1_spatial));
    }
    cs.pre0 = {CellKind::connection(), 0, {0, 1},
               {cl.s0_channels, cl.channels, cl.s0_spatial, cl.s0_spatial, s0_stride}};
    cs.pre1 = {CellKind::connection(), 0, {0, 1},
               {cl.s1_channels, cl.channels, cl.s1_spatial, cl.s1_spatial, 1}};
    const CellTemplate t = plan.template_of(cl.kind);
    for (std::size_t e = 0; e < t.edges().size(); ++e) {
      const Edge& ed = t.edges()[e];
      const std::size_t stride = cl.reduction && ed.from < 2 ? 2 : 1;
      const std::size_t h = stride == 2 || ed.from < 2 ? cl.spatial : cl.out_spatial;
      cs.edges.push_back({cl.kind, e, ed, {cl.channels, cl.channels, h, h, stride}});
    }
    sites.push_back(std::move(cs));
  }
  return sites;
}

OpContext stem_context(const NetworkPlan& plan) {
  return {plan.input_channels, plan.init_channels, plan.image_size, plan.image_size, 1};
}

std::size_t classifier_inputs(const NetworkPlan& plan) {
  return plan.layout().back().out_channels;
}

ThetaTensors::ThetaTensors(const ArchParams& theta, bool requires_grad) {
  for (std::size_t s = 0; s < theta.slots().size(); ++s) {
    const auto logits = theta.logits(s);
    offsets_.push_back(theta.slots()[s].offset);
    slots_.emplace_back(Array({logits.size()}, std::vector<double>(logits.begin(), logits.end())),
                        requires_grad);
  }
  total_ = theta.size();
}

std::vector<double> ThetaTensors::gradient() const {
  std::vector<double> g(total_, 0.0);
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (!slots_[s].has_grad()) continue;
    const auto grad = slots_[s].grad().data();
    std::copy(grad.begin(), grad.end(), g.begin() + static_cast<std::ptrdiff_t>(offsets_[s]));
  }
  return g;
}

bool ThetaTensors::any_grad() const {
  for (const Tensor& t : slots_) {
    if (t.has_grad()) return true;
  }
  return false;
}

namespace {

Parameter make_conv_weight(const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k,
                           Rng& rng) {
  Array w({c_out, c_in, k, k});
  const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
  for (double& v : w.data()) v = uniform(rng, -bound, bound);
  return {name, Tensor(std::move(w), true)};
}

std::string site_name(std::size_t cell, const std::string& what) {
  return "cell" + std::to_string(cell) + "." + what;
}

std::string edge_name(const Edge& e) {
  return "edge(" + std::to_string(e.from) + "," + std::to_string(e.to) + ")";
}

}  // namespace

void Network::init_stem(Rng& rng) {
  const OpContext stem = stem_context(plan_);
  stem_weight_ = make_conv_weight("stem.conv.weight", stem.c_out, stem.c_in, 3, rng);
  stem_gamma_ = {"stem.bn.gamma", Tensor(Array({stem.c_out}, 1.0), true)};
  stem_beta_ = {"stem.bn.beta", Tensor(Array({stem.c_out}, 0.0), true)};
}

void Network::init_head(Rng& rng) {
  const std::size_t f = classifier_inputs(plan_);
  const double bound = 1.0 / std::sqrt(static_cast<double>(f));
  Array w({plan_.n_classes, f});
  for (double& v : w.data()) v = uniform(rng, -bound, bound);
  fc_weight_ = {"classifier.weight", Tensor(std::move(w), true)};
  fc_bias_ = {"classifier.bias", Tensor(Array({plan_.n_classes}, 0.0), true)};
}

Network Network::supernet(const NetworkPlan& plan, std::uint64_t seed) {
  Network net;
  net.supernet_ = true;
  net.plan_ = plan;
  Rng rng(seed);
  const ArchParams layout(plan);
  net.init_stem(rng);
  const std::size_t conn_slot = *layout.find(CellKind::connection(), 0);
  auto build_all = [&](const OpContext& ctx, const std::vector<OpKind>& ops, const std::string& name) {
    std::vector<OpInstance> out;
    for (OpKind op : ops) out.push_back(build_op(op, ctx, rng, name + "." + std::string(op_name(op))));
    return out;
  };
  for (const CellSites& cs : plan_sites(plan)) {
    Cell cell;
    cell.kind = cs.kind;
    cell.pre0 = {conn_slot, build_all(cs.pre0.ctx, plan.connection_ops, site_name(cs.cell, "pre0"))};
    cell.pre1 = {conn_slot, build_all(cs.pre1.ctx, plan.connection_ops, site_name(cs.cell, "pre1"))};
    for (const EdgeSite& es : cs.edges) {
      cell.edges.emplace_back(LearnedEdge{*layout.find(es.kind, es.edge),
                                          build_all(es.ctx, plan.cell_ops, site_name(cs.cell, edge_name(es.endpoints)))});
    }
    net.cells_.push_back(std::move(cell));
  }
  net.init_head(rng);
  return net;
}

Network Network::discrete(const NetworkPlan& plan, const DiscreteArch& arch, std::uint64_t seed) {
  validate_arch(arch, plan);
  Network net;
  net.supernet_ = false;
  net.plan_ = plan;
  Rng rng(seed);
  net.init_stem(rng);
  const OpKind conn_op = arch.cells.at(CellKind::connection()).at(0).inputs.at(0).op;
  for (const CellSites& cs : plan_sites(plan)) {
    const CellTemplate t = plan.template_of(cs.kind);
    Cell cell;
    cell.kind = cs.kind;
    cell.pre0 = {0, {build_op(conn_op, cs.pre0.ctx, rng, site_name(cs.cell, "pre0." + std::string(op_name(conn_op))))}};
    cell.pre1 = {0, {build_op(conn_op, cs.pre1.ctx, rng, site_name(cs.cell, "pre1." + std::string(op_name(conn_op))))}};
    cell.edges.resize(cs.edges.size());
    for (const NodeChoice& nc : arch.cells.at(cs.kind)) {
      for (const ChosenInput& in : nc.inputs) {
        const std::size_t e = t.edge_index(in.from, nc.node);
        const EdgeSite& es = cs.edges[e];
        cell.edges[e] = LearnedEdge{0, {build_op(in.op, es.ctx, rng,
                                                 site_name(cs.cell, edge_name(es.endpoints) + "." +
                                                                        std::string(op_name(in.op))))}};
      }
    }
    net.cells_.push_back(std::move(cell));
  }
  net.init_head(rng);
  return net;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out{&stem_weight_, &stem_gamma_, &stem_beta_};
  auto add_edge = [&](LearnedEdge& e) {
    for (OpInstance& op : e.ops) {
      for (Parameter& p : op.parameters()) out.push_back(&p);
    }
  };
  for (Cell& c : cells_) {
    add_edge(c.pre0);
    add_edge(c.pre1);
    for (auto& e : c.edges) {
      if (e) add_edge(*e);
    }
  }
  out.push_back(&fc_weight_);
  out.push_back(&fc_bias_);
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  auto mut = const_cast<Network*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t Network::weight_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->tensor.numel();
  return n;
}

Tensor Network::edge_forward(Tape& tape, const LearnedEdge& edge, const Tensor& x, const ThetaTensors* theta,
                             bool attach, std::vector<std::vector<double>>* weights) const {
  if (!supernet_) return edge.ops.front().apply(tape, x);
  Tensor logits = attach ? theta->slot(edge.slot) : theta->slot(edge.slot).detached_copy();
  if (weights) weights->push_back(softmax_of(logits.data()));
  return mixed_edge_forward(tape, logits, x, edge.ops);
}

Tensor Network::forward(Tape& tape, const Tensor& images, const ThetaTensors* theta,
                        const ForwardOptions& options) const {
  if (supernet_ && theta == nullptr) throw Error("supernet forward needs architecture parameters");
  const Shape want{images.shape().empty() ? 0 : images.shape()[0], plan_.input_channels, plan_.image_size,
                   plan_.image_size};
  if (images.shape() != want) {
    throw ShapeError("network input " + shape_to_string(images.shape()) + ", expected " + shape_to_string(want));
  }
  if (options.weights_out) options.weights_out->assign(cells_.size(), {});
  Tensor x = prim::conv2d(tape, images, stem_weight_.tensor, {1, 1, 1, 1});
  x = prim::batch_norm(tape, x, stem_gamma_.tensor, stem_beta_.tensor);
  Tensor s0 = x, s1 = x;
  const std::size_t n_nodes = plan_.n_nodes;
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const Cell& cell = cells_[c];
    const bool attach = options.theta_grad_cells == nullptr || options.theta_grad_cells->at(c);
    auto* weights = options.weights_out ? &(*options.weights_out)[c] : nullptr;
    const CellTemplate t = plan_.template_of(cell.kind);
    try {
      std::vector<Tensor> states;
      states.push_back(edge_forward(tape, cell.pre0, s0, theta, attach, weights));
      states.push_back(edge_forward(tape, cell.pre1, s1, theta, attach, weights));
      std::vector<Tensor> inter;
      for (std::size_t j = 2; j + 1 < n_nodes; ++j) {
        Tensor acc;
        for (std::size_t e : t.edges_into(j)) {
          if (!cell.edges[e]) continue;
          Tensor y = edge_forward(tape, *cell.edges[e], states[t.edges()[e].from], theta, attach, weights);
          acc = acc.defined() ? prim::add(tape, acc, y) : y;
        }
        if (!acc.defined()) throw ShapeError("node " + std::to_string(j) + " has no inputs");
        states.push_back(acc);
        inter.push_back(acc);
      }
      s0 = s1;
      s1 = prim::concat_channels(tape, inter);
    } catch (const ShapeError& e) {
      throw ShapeError("cell " + std::to_string(c) + " (" + cell.kind.name() + "): " + e.what());
    }
  }
  Tensor pooled = prim::global_avg_pool(tape, s1);
  return prim::linear(tape, pooled, fc_weight_.tensor, fc_bias_.tensor);
}

}  // namespace rcnas

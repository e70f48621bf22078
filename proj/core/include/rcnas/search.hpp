// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcnas/cellgraph.hpp"
#include "rcnas/costmodel.hpp"
#include "rcnas/data.hpp"
#include "rcnas/network.hpp"
#include "rcnas/optim.hpp"
#include "rcnas/projection.hpp"

namespace rcnas {

struct SearchConfig {
  std::size_t e_u = 150;
  std::size_t warm_start_multiplier = 10;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  /// Outer rounds; 0 derives them from the epoch budget.
  std::size_t rounds = 0;
  SgdConfig w_optimizer{};
  AdamConfig theta_optimizer{};
  /// Initial logits are drawn from N(0, scale^2).
  double theta_init_scale = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  /// 1 + ceil(max(0, epochs * floor(train_size / batch) - warm * e_u) / e_u),
  /// unless `rounds` is set.
  std::size_t resolve_rounds(std::size_t train_size) const;
  /// Phase-I steps of round r.
  std::size_t steps_in_round(std::size_t r) const { return r == 0 ? warm_start_multiplier * e_u : e_u; }
  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

struct SearchProblem {
  NetworkPlan plan;
  SearchConfig search;
  ProjectionConfig projection;
  ConstraintBox box;
  CostScope scope = CostScope::kTopK;
};

/// Seed streams derived from SearchConfig::seed.
enum SeedStream : std::uint64_t { kWeightInit = 1, kThetaInit = 2, kTrainBatches = 3, kValBatches = 4 };

struct TrainState {
  Network net;
  ArchParams theta;
  MomentumSgd w_opt;
  Adam theta_opt;
  std::size_t outer = 0;  // completed rounds
  std::size_t w_updates = 0;
  std::size_t theta_updates = 0;
  std::pair<std::size_t, std::size_t> train_cursor{0, 0};  // sampler (epoch, position)
  std::pair<std::size_t, std::size_t> val_cursor{0, 0};

  /// Fresh state: supernet weights and logits drawn from the problem's seed.
  static TrainState initial(const SearchProblem& problem);
};

struct StepLosses {
  double train_loss = 0.0;
  double val_loss = 0.0;
  /// Alternation checks: a gradient buffer on the other variable set.
  bool theta_grad_in_w_step = false;
  bool w_grad_in_theta_step = false;
};

using Batch = std::pair<Tensor, Tensor>;

/// Step 1: w <- SGD on L_train with theta fixed (no theta gradients).
double w_step(TrainState& state, const Batch& train, StepLosses* checks = nullptr);
/// Step 2: theta <- Adam on L_val with w fixed (no w gradients).
double theta_step(TrainState& state, const Batch& val, StepLosses* checks = nullptr);
/// Both steps, first-order. Throws NumericError on a non-finite loss.
StepLosses phase1_step(TrainState& state, const Batch& train, const Batch& val);

struct SearchLogRow {
  std::size_t outer = 0;
  std::size_t inner = 0;
  char phase = 'I';
  double train_loss = 0.0;
  double val_loss = 0.0;
  CostVector phi{};
  double lambda = 0.0;
  bool feasible = false;
};

struct RoundSummary {
  std::size_t phase1_steps = 0;
  double lambda = 0.0;
  ProjectionResult projection;
  CostVector exact{};  // exact cost of derive_discrete(theta) after the round
};

struct SearchReport {
  DiscreteArch arch;
  ArchParams theta;
  CostVector phi{};    // final expected cost under the problem's scope
  CostVector exact{};  // exact cost of `arch`
  bool feasible = false;
  std::size_t w_updates = 0;
  std::vector<RoundSummary> rounds;
  std::vector<SearchLogRow> log;
  double wall_seconds = 0.0;
};

struct SearchHooks {
  /// After every Phase-I step.
  std::function<void(const TrainState&)> after_step;
  /// After every round, once theta is replaced by its projection.
  std::function<void(const TrainState&, const RoundSummary&)> after_round;
};

/// The search loop: rounds of Phase I (the first warm-started) followed by
/// projection, then derivation. `train` and `val` are the two search halves.
SearchReport run_search(const SearchProblem& problem, const Dataset& train, const Dataset& val,
                        const SearchHooks& hooks = {});
/// Continues from `state` (e.g. a loaded checkpoint).
SearchReport run_search(const SearchProblem& problem, const Dataset& train, const Dataset& val,
                        TrainState state, const SearchHooks& hooks = {});

/// Plain first-order DARTS, written independently of run_search: alternating
/// SGD on w and Adam on theta over the same seeded batches. Returns theta
/// after each of `steps` iterations.
std::vector<ArchParams> darts_reference(const SearchProblem& problem, const Dataset& train, const Dataset& val,
                                        std::size_t steps);

std::string search_log_csv(const std::vector<SearchLogRow>& rows);

nlohmann::json checkpoint_to_json(const TrainState& state);
/// Restores into a state built by TrainState::initial for the same problem.
void checkpoint_from_json(const nlohmann::json& doc, TrainState& state);

struct RetrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  SgdConfig sgd{0.05, 0.9, 3e-4};
  bool cosine = true;
  bool cutout = false;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const RetrainConfig&, const RetrainConfig&) = default;
};

struct RetrainMetrics {
  double val_accuracy = 0.0;
  double train_loss = 0.0;  // mean over the last epoch
  CostVector exact{};
};

/// Trains Network::discrete(arch) from scratch on `train`, scores on `val`.
RetrainMetrics retrain_eval(const DiscreteArch& arch, const NetworkPlan& plan, const Dataset& train,
                            const Dataset& val, const RetrainConfig& cfg);
/// Accuracy of `net` on `ds` in batches of `batch_size` (batch statistics).
double evaluate_accuracy(const Network& net, const ThetaTensors* theta, const Dataset& ds, std::size_t batch_size);

std::string retrain_metrics_csv(const RetrainMetrics& m);

}  // namespace rcnas

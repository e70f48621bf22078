// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "rcnas/costmodel.hpp"
#include "rcnas/data.hpp"
#include "rcnas/primitives.hpp"
#include "rcnas/projection.hpp"
#include "rcnas/search.hpp"

namespace rcnas {
namespace {

Array filled(Shape shape, Rng& rng) {
  Array a(std::move(shape));
  for (double& v : a.data()) v = uniform(rng, -1.0, 1.0);
  return a;
}

NetworkPlan bench_plan(std::size_t cells) {
  NetworkPlan plan;
  plan.n_cells = cells;
  plan.n_nodes = 5;
  plan.levels = cells >= 8 ? 3 : 2;
  plan.init_channels = 4;
  plan.image_size = 8;
  plan.n_classes = 4;
  return plan;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor x(filled({8, c, 8, 8}, rng), true);
  Tensor w(filled({c, c, 3, 3}, rng), true);
  prim::Conv2dAttrs attrs;
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    Tape tape;
    Tensor y = prim::conv2d(tape, x, w, attrs);
    tape.backward(prim::sum(tape, y));
    benchmark::DoNotOptimize(w.grad());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_SupernetPhaseOneStep(benchmark::State& state) {
  SearchProblem problem;
  problem.plan = bench_plan(static_cast<std::size_t>(state.range(0)));
  problem.search.batch_size = 16;
  auto [train, val] = split(gen_synthetic("shapes", 128, 8, 4, 7), 0.5, 11);
  TrainState s = TrainState::initial(problem);
  BatchSampler tb(train, 16, 3), vb(val, 16, 4);
  for (auto _ : state) {
    const StepLosses l = phase1_step(s, tb.next(), vb.next());
    benchmark::DoNotOptimize(l.val_loss);
  }
}
BENCHMARK(BM_SupernetPhaseOneStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ExpectedCostAndGradient(benchmark::State& state) {
  const NetworkPlan plan = bench_plan(static_cast<std::size_t>(state.range(0)));
  const CostTable table = CostTable::build(plan);
  Rng rng(5);
  const ArchParams theta = ArchParams::random(plan, rng, 1.0);
  const ScopeMask mask = scope_mask(theta, plan, CostScope::kTopK);
  for (auto _ : state) {
    benchmark::DoNotOptimize(expected_cost(theta, table, mask));
    benchmark::DoNotOptimize(cost_gradient(theta, table, mask));
  }
}
BENCHMARK(BM_ExpectedCostAndGradient)->Arg(4)->Arg(8)->Arg(20);

void BM_Projection(benchmark::State& state) {
  const NetworkPlan plan = bench_plan(8);
  const CostTable table = CostTable::build(plan);
  Rng rng(9);
  const ArchParams theta = ArchParams::random(plan, rng, 1.0);
  const ScopeMask mask = scope_mask(theta, plan, CostScope::kTopK);
  ConstraintBox box;  // unreachable upper bound, so every call runs e_p steps
  box.upper = {0.0, 0.0};
  ProjectionConfig cfg;
  cfg.e_p = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(project(theta, box, table, mask, cfg, cfg.lambda0).phi);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Projection)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace rcnas

BENCHMARK_MAIN();

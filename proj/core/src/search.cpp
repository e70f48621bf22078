// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/search.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rcnas/error.hpp"
#include "rcnas/format.hpp"
#include "rcnas/primitives.hpp"

namespace rcnas {

using nlohmann::json;

void SearchConfig::validate() const {
  if (e_u == 0) throw ConfigError("/search/e_u", "must be positive");
  if (warm_start_multiplier == 0) throw ConfigError("/search/warm_start_multiplier", "must be positive");
  if (epochs == 0) throw ConfigError("/search/epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("/search/batch_size", "must be positive");
  if (!(w_optimizer.lr >= 0.0)) throw ConfigError("/search/w_lr", "must be >= 0");
  if (!(theta_optimizer.lr >= 0.0)) throw ConfigError("/search/theta_lr", "must be >= 0");
  if (!(theta_init_scale >= 0.0)) throw ConfigError("/search/theta_init_scale", "must be >= 0");
}

std::size_t SearchConfig::resolve_rounds(std::size_t train_size) const {
  if (rounds != 0) return rounds;
  const std::size_t budget = epochs * (train_size / batch_size);
  const std::size_t warm = warm_start_multiplier * e_u;
  if (budget <= warm) return 1;
  return 1 + (budget - warm + e_u - 1) / e_u;
}

TrainState TrainState::initial(const SearchProblem& problem) {
  problem.plan.validate();
  problem.search.validate();
  Rng theta_rng(derive_seed(problem.search.seed, kThetaInit));
  return TrainState{Network::supernet(problem.plan, derive_seed(problem.search.seed, kWeightInit)),
                    ArchParams::random(problem.plan, theta_rng, problem.search.theta_init_scale),
                    MomentumSgd(problem.search.w_optimizer),
                    Adam(problem.search.theta_optimizer)};
}

namespace {

void set_weights_trainable(Network& net, bool on) {
  for (Parameter* p : net.parameters()) p->tensor.set_requires_grad(on);
}

double grad_norm(const std::vector<double>& g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

double w_step(TrainState& state, const Batch& train, StepLosses* checks) {
  Tape tape;
  const ThetaTensors theta(state.theta, false);
  std::vector<Parameter*> params = state.net.parameters();
  for (Parameter* p : params) p->tensor.zero_grad();
  Tensor loss = prim::cross_entropy(tape, state.net.forward(tape, train.first, &theta), train.second);
  const double value = loss.value()[0];
  tape.backward(loss);
  std::vector<std::span<double>> ps;
  std::vector<std::span<const double>> gs;
  double sq = 0.0;
  for (Parameter* p : params) {
    ps.push_back(p->tensor.mutable_value().data());
    gs.push_back(p->tensor.grad().data());
    for (double g : p->tensor.grad().data()) sq += g * g;
  }
  if (!std::isfinite(value) || !std::isfinite(sq)) {
    throw NumericError("non-finite training loss at w-update " + std::to_string(state.w_updates) +
                       " (loss " + format_double(value) + ", grad norm " + format_double(std::sqrt(sq)) + ")");
  }
  if (checks) checks->theta_grad_in_w_step = theta.any_grad();
  state.w_opt.step(ps, gs);
  ++state.w_updates;
  return value;
}

double theta_step(TrainState& state, const Batch& val, StepLosses* checks) {
  set_weights_trainable(state.net, false);
  Tape tape;
  const ThetaTensors theta(state.theta, true);
  Tensor loss = prim::cross_entropy(tape, state.net.forward(tape, val.first, &theta), val.second);
  const double value = loss.value()[0];
  tape.backward(loss);
  if (checks) {
    for (const Parameter* p : state.net.parameters()) checks->w_grad_in_theta_step |= p->tensor.has_grad();
  }
  set_weights_trainable(state.net, true);
  const std::vector<double> g = theta.gradient();
  if (!std::isfinite(value) || !std::isfinite(grad_norm(g))) {
    throw NumericError("non-finite validation loss at theta-update " + std::to_string(state.theta_updates) +
                       " (loss " + format_double(value) + ", grad norm " + format_double(grad_norm(g)) + ")");
  }
  state.theta_opt.step(state.theta.values(), g);
  ++state.theta_updates;
  return value;
}

StepLosses phase1_step(TrainState& state, const Batch& train, const Batch& val) {
  StepLosses out;
  out.train_loss = w_step(state, train, &out);
  out.val_loss = theta_step(state, val, &out);
  return out;
}

SearchReport run_search(const SearchProblem& problem, const Dataset& train, const Dataset& val,
                        const SearchHooks& hooks) {
  return run_search(problem, train, val, TrainState::initial(problem), hooks);
}

SearchReport run_search(const SearchProblem& problem, const Dataset& train, const Dataset& val,
                        TrainState state, const SearchHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  problem.search.validate();
  problem.projection.validate();
  problem.box.validate();
  const CostTable table = CostTable::build(problem.plan);
  BatchSampler train_batches(train, problem.search.batch_size, derive_seed(problem.search.seed, kTrainBatches));
  BatchSampler val_batches(val, problem.search.batch_size, derive_seed(problem.search.seed, kValBatches));
  train_batches.seek(state.train_cursor.first, state.train_cursor.second);
  val_batches.seek(state.val_cursor.first, state.val_cursor.second);

  SearchReport report;
  const std::size_t rounds = problem.search.resolve_rounds(train.size());
  for (std::size_t r = state.outer; r < rounds; ++r) {
    RoundSummary summary;
    summary.phase1_steps = problem.search.steps_in_round(r);
    for (std::size_t i = 0; i < summary.phase1_steps; ++i) {
      const Batch tb = train_batches.next();
      const Batch vb = val_batches.next();
      const StepLosses losses = phase1_step(state, tb, vb);
      state.train_cursor = {train_batches.epoch(), train_batches.position()};
      state.val_cursor = {val_batches.epoch(), val_batches.position()};
      SearchLogRow row{r, i, 'I', losses.train_loss, losses.val_loss, {}, 0.0, false};
      row.phi = expected_cost(state.theta, table, scope_mask(state.theta, problem.plan, problem.scope));
      row.feasible = feasible(row.phi, problem.box, problem.projection.epsilon);
      report.log.push_back(row);
      if (hooks.after_step) hooks.after_step(state);
    }
    summary.lambda = decay_lambda(problem.projection, r).first;
    const ScopeMask mask = scope_mask(state.theta, problem.plan, problem.scope);
    summary.projection = project(state.theta, problem.box, table, mask, problem.projection, summary.lambda);
    state.theta = summary.projection.theta_p;
    state.outer = r + 1;
    summary.exact = exact_cost(derive_discrete(state.theta, problem.plan), problem.plan);
    report.log.push_back(SearchLogRow{r, summary.projection.iterations, 'P', 0.0, 0.0, summary.projection.phi,
                                      summary.lambda, summary.projection.feasible});
    if (hooks.after_round) hooks.after_round(state, summary);
    report.rounds.push_back(std::move(summary));
  }
  report.theta = state.theta;
  report.arch = derive_discrete(state.theta, problem.plan);
  report.phi = expected_cost(state.theta, table, scope_mask(state.theta, problem.plan, problem.scope));
  report.exact = exact_cost(report.arch, problem.plan);
  report.feasible = feasible(report.phi, problem.box, problem.projection.epsilon);
  report.w_updates = state.w_updates;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<ArchParams> darts_reference(const SearchProblem& problem, const Dataset& train, const Dataset& val,
                                        std::size_t steps) {
  const SearchConfig& cfg = problem.search;
  Network net = Network::supernet(problem.plan, derive_seed(cfg.seed, kWeightInit));
  Rng theta_rng(derive_seed(cfg.seed, kThetaInit));
  ArchParams theta = ArchParams::random(problem.plan, theta_rng, cfg.theta_init_scale);
  BatchSampler train_batches(train, cfg.batch_size, derive_seed(cfg.seed, kTrainBatches));
  BatchSampler val_batches(val, cfg.batch_size, derive_seed(cfg.seed, kValBatches));

  std::vector<Parameter*> params = net.parameters();
  std::vector<std::vector<double>> momentum(params.size());
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  std::vector<ArchParams> trajectory;
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto [xt, yt] = train_batches.next();
    const auto [xv, yv] = val_batches.next();

    // w: momentum SGD on the training loss.
    {
      for (Parameter* p : params) p->tensor.zero_grad();
      Tape tape;
      ThetaTensors fixed(theta, false);
      tape.backward(prim::cross_entropy(tape, net.forward(tape, xt, &fixed), yt));
      const SgdConfig& s = cfg.w_optimizer;
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k]->tensor.mutable_value().data();
        auto g = params[k]->tensor.grad().data();
        if (t == 1) momentum[k].assign(w.size(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double d = g[i] + s.weight_decay * w[i];
          momentum[k][i] = t == 1 ? d : s.momentum * momentum[k][i] + d;
          w[i] -= s.lr * momentum[k][i];
        }
      }
    }
    // theta: Adam on the validation loss, weights frozen.
    {
      for (Parameter* p : params) p->tensor.set_requires_grad(false);
      Tape tape;
      ThetaTensors live(theta, true);
      tape.backward(prim::cross_entropy(tape, net.forward(tape, xv, &live), yv));
      for (Parameter* p : params) p->tensor.set_requires_grad(true);
      const std::vector<double> g = live.gradient();
      const AdamConfig& a = cfg.theta_optimizer;
      const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(t));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        double& th = theta.values()[i];
        const double d = g[i] + a.weight_decay * th;
        m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * d;
        v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * d * d;
        th -= a.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + a.eps);
      }
    }
    trajectory.push_back(theta);
  }
  return trajectory;
}

std::string search_log_csv(const std::vector<SearchLogRow>& rows) {
  std::ostringstream out;
  out << "outer_iter,inner_iter,phase,L_train,L_val,phi_params,phi_flops,lambda,feasible\n";
  for (const SearchLogRow& r : rows) {
    out << r.outer << ',' << r.inner << ',' << (r.phase == 'I' ? "I" : "II") << ',';
    if (r.phase == 'I') {
      out << format_double(r.train_loss) << ',' << format_double(r.val_loss);
    } else {
      out << ',';
    }
    out << ',' << format_double(r.phi[0]) << ',' << format_double(r.phi[1]) << ','
        << (r.phase == 'I' ? "" : format_double(r.lambda)) << ',' << (r.feasible ? 1 : 0) << '\n';
  }
  return out.str();
}

json checkpoint_to_json(const TrainState& state) {
  json weights = json::object();
  for (const Parameter* p : state.net.parameters()) {
    weights[p->name] = std::vector<double>(p->tensor.data().begin(), p->tensor.data().end());
  }
  return {{"schema_version", 1},
          {"theta", state.theta.values()},
          {"weights", weights},
          {"sgd_buffers", state.w_opt.buffers()},
          {"adam", {{"t", state.theta_opt.steps()},
                    {"m", state.theta_opt.first_moments()},
                    {"v", state.theta_opt.second_moments()}}},
          {"outer", state.outer},
          {"w_updates", state.w_updates},
          {"theta_updates", state.theta_updates},
          {"train_cursor", {state.train_cursor.first, state.train_cursor.second}},
          {"val_cursor", {state.val_cursor.first, state.val_cursor.second}}};
}

void checkpoint_from_json(const json& doc, TrainState& state) {
  try {
    if (doc.at("schema_version").get<int>() != 1) throw ConfigError("/schema_version", "unsupported checkpoint version");
    const auto theta = doc.at("theta").get<std::vector<double>>();
    if (theta.size() != state.theta.size()) throw ConfigError("/theta", "size does not match the plan");
    state.theta.values() = theta;
    const json& weights = doc.at("weights");
    for (Parameter* p : state.net.parameters()) {
      if (!weights.contains(p->name)) throw ConfigError("/weights/" + p->name, "missing");
      const auto values = weights.at(p->name).get<std::vector<double>>();
      if (values.size() != p->tensor.numel()) throw ConfigError("/weights/" + p->name, "size mismatch");
      std::copy(values.begin(), values.end(), p->tensor.mutable_value().data().begin());
    }
    state.w_opt.buffers() = doc.at("sgd_buffers").get<std::vector<std::vector<double>>>();
    state.theta_opt.set_steps(doc.at("adam").at("t").get<std::uint64_t>());
    state.theta_opt.first_moments() = doc.at("adam").at("m").get<std::vector<std::vector<double>>>();
    state.theta_opt.second_moments() = doc.at("adam").at("v").get<std::vector<std::vector<double>>>();
    state.outer = doc.at("outer").get<std::size_t>();
    state.w_updates = doc.at("w_updates").get<std::size_t>();
    state.theta_updates = doc.at("theta_updates").get<std::size_t>();
    const auto tc = doc.at("train_cursor").get<std::vector<std::size_t>>();
    const auto vc = doc.at("val_cursor").get<std::vector<std::size_t>>();
    if (tc.size() != 2 || vc.size() != 2) throw ConfigError("/train_cursor", "expected [epoch, position]");
    state.train_cursor = {tc[0], tc[1]};
    state.val_cursor = {vc[0], vc[1]};
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("malformed checkpoint: ") + e.what());
  }
}

void RetrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("/eval/epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("/eval/batch_size", "must be positive");
  if (!(sgd.lr >= 0.0)) throw ConfigError("/eval/lr", "must be >= 0");
}

double evaluate_accuracy(const Network& net, const ThetaTensors* theta, const Dataset& ds, std::size_t batch_size) {
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(ds.size(), begin + batch_size); ++i) idx.push_back(i);
    Dataset b = ds.subset(idx);
    Tape tape;
    Tensor logits = net.forward(tape, Tensor(std::move(b.images)), theta);
    const std::size_t k = logits.shape()[1];
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (logits.data()[r * k + c] > logits.data()[r * k + best]) best = c;
      }
      correct += best == b.labels[r] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

RetrainMetrics retrain_eval(const DiscreteArch& arch, const NetworkPlan& plan, const Dataset& train,
                            const Dataset& val, const RetrainConfig& cfg) {
  cfg.validate();
  Network net = Network::discrete(plan, arch, derive_seed(cfg.seed, kWeightInit));
  BatchSampler batches(train, cfg.batch_size, derive_seed(cfg.seed, kTrainBatches));
  Rng cutout_rng(derive_seed(cfg.seed, 5));
  MomentumSgd opt(cfg.sgd);
  std::vector<Parameter*> params = net.parameters();
  RetrainMetrics metrics;
  const std::size_t per_epoch = batches.batches_per_epoch();
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    if (cfg.cosine) {
      opt.set_lr(0.5 * cfg.sgd.lr *
                 (1.0 + std::cos(std::numbers::pi * static_cast<double>(e) / static_cast<double>(cfg.epochs))));
    }
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      auto [x, y] = batches.next();
      if (cfg.cutout) cutout(x.mutable_value(), cutout_rng);
      for (Parameter* p : params) p->tensor.zero_grad();
      Tape tape;
      Tensor loss = prim::cross_entropy(tape, net.forward(tape, x, nullptr), y);
      if (!std::isfinite(loss.value()[0])) {
        throw NumericError("non-finite retraining loss at epoch " + std::to_string(e) + ", batch " +
                           std::to_string(b));
      }
      loss_sum += loss.value()[0];
      tape.backward(loss);
      std::vector<std::span<double>> ps;
      std::vector<std::span<const double>> gs;
      for (Parameter* p : params) {
        ps.push_back(p->tensor.mutable_value().data());
        gs.push_back(p->tensor.grad().data());
      }
      opt.step(ps, gs);
    }
    metrics.train_loss = loss_sum / static_cast<double>(per_epoch);
  }
  metrics.val_accuracy = evaluate_accuracy(net, nullptr, val, cfg.batch_size);
  metrics.exact = exact_cost(arch, plan);
  return metrics;
}

std::string retrain_metrics_csv(const RetrainMetrics& m) {
  return "val_accuracy,train_loss,params,flops\n" + format_double(m.val_accuracy) + "," +
         format_double(m.train_loss) + "," + format_double(m.exact[0]) + "," + format_double(m.exact[1]) + "\n";
}

}  // namespace rcnas

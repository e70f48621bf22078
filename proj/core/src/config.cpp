// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rcnas/error.hpp"

namespace rcnas {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, rejecting any it was not asked about.
class Section {
 public:
  Section(const json& doc, std::string path) : path_(std::move(path)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
    doc_ = &doc;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return doc_ && doc_->contains(key);
  }
  const json& at(const std::string& key) const { return doc_->at(key); }
  std::string path(const std::string& key) const { return path_ + "/" + key; }

  void read(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    out = natural(key);
  }
  void read(const std::string& key, std::uint64_t& out, int) {
    if (!has(key)) return;
    out = natural(key);
  }
  void read(const std::string& key, double& out) {
    if (!has(key)) return;
    if (!at(key).is_number()) throw ConfigError(path(key), "expected a number");
    out = at(key).get<double>();
  }
  void read(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) throw ConfigError(path(key), "expected a boolean");
    out = at(key).get<bool>();
  }
  void read(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!at(key).is_string()) throw ConfigError(path(key), "expected a string");
    out = at(key).get<std::string>();
  }
  const json& section(const std::string& key) {
    static const json null;
    return has(key) ? at(key) : null;
  }

  /// Call after all reads.
  void finish() const {
    if (!doc_) return;
    for (const auto& [key, value] : doc_->items()) {
      if (!seen_.count(key)) throw ConfigError(path(key), "unknown key");
    }
  }

 private:
  // Parsed documents hold non-negative literals as unsigned; built ones may not.
  std::uint64_t natural(const std::string& key) const {
    const json& v = at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(path(key), "expected a non-negative integer");
  }

  const json* doc_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<OpKind> read_ops(const json& list, const std::string& path) {
  if (!list.is_array()) throw ConfigError(path, "expected an array of operation names");
  std::vector<OpKind> ops;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_string()) throw ConfigError(path + "/" + std::to_string(i), "expected a string");
    auto op = op_from_name(list[i].get<std::string>());
    if (!op) throw ConfigError(path + "/" + std::to_string(i), "unknown operation '" + list[i].get<std::string>() + "'");
    ops.push_back(*op);
  }
  return ops;
}

json ops_json(const std::vector<OpKind>& ops) {
  json out = json::array();
  for (OpKind op : ops) out.push_back(std::string(op_name(op)));
  return out;
}

json bound_json(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  {
    Section s(root.section("data"), "/data");
    DataConfig& d = cfg.data;
    s.read("generator", d.generator);
    s.read("n", d.n);
    s.read("image_size", d.image_size);
    s.read("classes", d.classes);
    s.read("seed", d.seed, 0);
    s.read("split", d.split);
    s.read("split_seed", d.split_seed, 0);
    if (s.has("cifar10_files")) {
      const json& files = s.at("cifar10_files");
      if (!files.is_array()) throw ConfigError("/data/cifar10_files", "expected an array of paths");
      for (std::size_t i = 0; i < files.size(); ++i) {
        if (!files[i].is_string()) throw ConfigError("/data/cifar10_files/" + std::to_string(i), "expected a string");
        d.cifar10_files.push_back(files[i].get<std::string>());
      }
    }
    s.finish();
  }
  {
    Section s(root.section("plan"), "/plan");
    NetworkPlan& p = cfg.plan;
    s.read("cells", p.n_cells);
    s.read("init_channels", p.init_channels);
    s.read("nodes", p.n_nodes);
    s.read("levels", p.levels);
    if (s.has("op_set")) p.cell_ops = read_ops(s.at("op_set"), "/plan/op_set");
    if (s.has("connection_op_set")) p.connection_ops = read_ops(s.at("connection_op_set"), "/plan/connection_op_set");
    s.finish();
  }
  {
    Section s(root.section("constraints"), "/constraints");
    for (std::size_t m = 0; m < kMetrics; ++m) {
      const std::string name(kMetricNames[m]);
      Section b(s.section(name), "/constraints/" + name);
      b.read("lower", cfg.box.lower[m]);
      if (b.has("upper") && !b.at("upper").is_null()) b.read("upper", cfg.box.upper[m]);
      b.finish();
    }
    s.finish();
  }
  {
    Section s(root.section("projection"), "/projection");
    ProjectionConfig& p = cfg.projection;
    s.read("lambda0", p.lambda0);
    s.read("gamma", p.gamma);
    s.read("e_p", p.e_p);
    s.read("lr", p.adam.lr);
    s.read("beta1", p.adam.beta1);
    s.read("beta2", p.adam.beta2);
    s.read("epsilon", p.epsilon);
    s.finish();
  }
  {
    Section s(root.section("search"), "/search");
    SearchConfig& c = cfg.search;
    s.read("e_u", c.e_u);
    s.read("warm_start_multiplier", c.warm_start_multiplier);
    s.read("epochs", c.epochs);
    s.read("batch_size", c.batch_size);
    s.read("rounds", c.rounds);
    s.read("seed", c.seed, 0);
    s.read("w_lr", c.w_optimizer.lr);
    s.read("w_momentum", c.w_optimizer.momentum);
    s.read("w_weight_decay", c.w_optimizer.weight_decay);
    s.read("theta_lr", c.theta_optimizer.lr);
    s.read("theta_beta1", c.theta_optimizer.beta1);
    s.read("theta_beta2", c.theta_optimizer.beta2);
    s.read("theta_weight_decay", c.theta_optimizer.weight_decay);
    s.read("theta_init_scale", c.theta_init_scale);
    s.finish();
  }
  {
    Section s(root.section("eval"), "/eval");
    RetrainConfig& e = cfg.eval;
    s.read("epochs", e.epochs);
    s.read("batch_size", e.batch_size);
    s.read("lr", e.sgd.lr);
    s.read("momentum", e.sgd.momentum);
    s.read("weight_decay", e.sgd.weight_decay);
    s.read("cosine", e.cosine);
    s.read("cutout", e.cutout);
    s.read("seed", e.seed, 0);
    s.finish();
  }
  {
    Section s(root.section("oracle"), "/oracle");
    s.read("ceiling", cfg.oracle.ceiling, 0);
    s.read("score_epochs", cfg.oracle.score_epochs);
    s.finish();
  }
  if (root.has("scope")) {
    if (!root.at("scope").is_string()) throw ConfigError("/scope", "expected \"topk\" or \"fulldag\"");
    auto scope = scope_from_name(root.at("scope").get<std::string>());
    if (!scope) throw ConfigError("/scope", "expected \"topk\" or \"fulldag\"");
    cfg.scope = *scope;
  }
  root.read("output_dir", cfg.output_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("", "malformed JSON in " + path + ": " + e.what());
  }
  return from_json(doc);
}

void RunConfig::validate() const {
  if (data.generator == "cifar10") {
    if (data.cifar10_files.empty()) throw ConfigError("/data/cifar10_files", "required for the cifar10 generator");
    if (data.image_size != 32 || data.classes != 10) {
      throw ConfigError("/data/image_size", "cifar10 needs image_size 32 and classes 10");
    }
  } else {
    const auto& names = generator_names();
    if (std::find(names.begin(), names.end(), data.generator) == names.end()) {
      throw ConfigError("/data/generator", "unknown generator '" + data.generator + "'");
    }
    if (data.n == 0) throw ConfigError("/data/n", "must be positive");
  }
  if (!(data.split > 0.0 && data.split < 1.0)) throw ConfigError("/data/split", "must lie in (0, 1)");
  NetworkPlan p = plan;
  p.image_size = data.image_size;
  p.n_classes = data.classes;
  p.validate();
  box.validate();
  projection.validate();
  search.validate();
  eval.validate();
  if (oracle.ceiling == 0) throw ConfigError("/oracle/ceiling", "must be positive");
  if (output_dir.empty()) throw ConfigError("/output_dir", "must not be empty");
}

json RunConfig::to_json() const {
  json constraints = json::object();
  for (std::size_t m = 0; m < kMetrics; ++m) {
    constraints[std::string(kMetricNames[m])] = {{"lower", box.lower[m]}, {"upper", bound_json(box.upper[m])}};
  }
  return {
      {"data", {{"generator", data.generator}, {"n", data.n}, {"image_size", data.image_size},
                {"classes", data.classes}, {"seed", data.seed}, {"split", data.split},
                {"split_seed", data.split_seed}, {"cifar10_files", data.cifar10_files}}},
      {"plan", {{"cells", plan.n_cells}, {"init_channels", plan.init_channels}, {"nodes", plan.n_nodes},
                {"levels", plan.levels}, {"op_set", ops_json(plan.cell_ops)},
                {"connection_op_set", ops_json(plan.connection_ops)}}},
      {"constraints", constraints},
      {"projection", {{"lambda0", projection.lambda0}, {"gamma", projection.gamma}, {"e_p", projection.e_p},
                      {"lr", projection.adam.lr}, {"beta1", projection.adam.beta1},
                      {"beta2", projection.adam.beta2}, {"epsilon", projection.epsilon}}},
      {"search", {{"e_u", search.e_u}, {"warm_start_multiplier", search.warm_start_multiplier},
                  {"epochs", search.epochs}, {"batch_size", search.batch_size}, {"rounds", search.rounds},
                  {"seed", search.seed}, {"w_lr", search.w_optimizer.lr},
                  {"w_momentum", search.w_optimizer.momentum},
                  {"w_weight_decay", search.w_optimizer.weight_decay}, {"theta_lr", search.theta_optimizer.lr},
                  {"theta_beta1", search.theta_optimizer.beta1}, {"theta_beta2", search.theta_optimizer.beta2},
                  {"theta_weight_decay", search.theta_optimizer.weight_decay},
                  {"theta_init_scale", search.theta_init_scale}}},
      {"eval", {{"epochs", eval.epochs}, {"batch_size", eval.batch_size}, {"lr", eval.sgd.lr},
                {"momentum", eval.sgd.momentum}, {"weight_decay", eval.sgd.weight_decay},
                {"cosine", eval.cosine}, {"cutout", eval.cutout}, {"seed", eval.seed}}},
      {"oracle", {{"ceiling", oracle.ceiling}, {"score_epochs", oracle.score_epochs}}},
      {"scope", std::string(scope_name(scope))},
      {"output_dir", output_dir}};
}

SearchProblem RunConfig::problem() const {
  SearchProblem p{plan, search, projection, box, scope};
  p.plan.image_size = data.image_size;
  p.plan.n_classes = data.classes;
  p.plan.input_channels = 3;
  return p;
}

std::pair<Dataset, Dataset> load_search_data(const DataConfig& cfg) {
  Dataset all = cfg.generator == "cifar10" ? load_cifar10_binary(cfg.cifar10_files)
                                           : gen_synthetic(cfg.generator, cfg.n, cfg.image_size, cfg.classes, cfg.seed);
  auto [train, val] = split(all, cfg.split, cfg.split_seed);
  const Normalizer norm = Normalizer::fit(train);
  norm.apply(train);
  norm.apply(val);
  return {std::move(train), std::move(val)};
}

}  // namespace rcnas

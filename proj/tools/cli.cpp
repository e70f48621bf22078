// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rcnas/arch_io.hpp"
#include "rcnas/config.hpp"
#include "rcnas/costmodel.hpp"
#include "rcnas/error.hpp"
#include "rcnas/format.hpp"
#include "rcnas/oracle.hpp"
#include "rcnas/search.hpp"

namespace rcnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string command;
  std::string config_path;
  std::string arch_path;
  std::string out_dir;
  std::string manifest_path;
  std::optional<std::uint64_t> seed;
  std::string scope;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", "malformed JSON in " + source + ": " + e.what());
  }
}

// Resolved inputs of one command: the config after flag overrides and, for
// commands that read one, the architecture document.
struct Inputs {
  RunConfig config;
  std::optional<json> arch;
  fs::path out;
};

Inputs resolve(const Options& opt, std::optional<json> manifest_config = std::nullopt,
               std::optional<json> manifest_arch = std::nullopt) {
  Inputs in;
  if (manifest_config) {
    in.config = RunConfig::from_json(*manifest_config);
  } else if (!opt.config_path.empty()) {
    in.config = RunConfig::load(opt.config_path);
  }
  if (opt.seed) {
    in.config.search.seed = *opt.seed;
    in.config.eval.seed = *opt.seed;
  }
  if (!opt.scope.empty()) {
    auto scope = scope_from_name(opt.scope);
    if (!scope) throw ConfigError("--scope", "expected topk or fulldag");
    in.config.scope = *scope;
  }
  if (!opt.out_dir.empty()) in.config.output_dir = opt.out_dir;
  in.config.validate();
  in.out = in.config.output_dir;
  if (manifest_arch) {
    in.arch = *manifest_arch;
  } else if (!opt.arch_path.empty()) {
    in.arch = parse_json(read_file(opt.arch_path), opt.arch_path);
  }
  return in;
}

DiscreteArch load_arch(const Inputs& in, const NetworkPlan& plan) {
  if (!in.arch) throw ConfigError("--arch", "this command needs an architecture file");
  DiscreteArch arch = arch_from_json(*in.arch);
  validate_arch(arch, plan);
  return arch;
}

void write_manifest(const std::string& command, const Inputs& in) {
  const RunConfig& c = in.config;
  json manifest = {
      {"schema_version", 1},
      {"command", command},
      {"version", RCNAS_VERSION},
      {"config", c.to_json()},
      {"arch", in.arch ? *in.arch : json(nullptr)},
      {"seeds", {{"data", c.data.seed}, {"split", c.data.split_seed}, {"search", c.search.seed},
                 {"eval", c.eval.seed}}},
  };
  write_file(in.out / "manifest.json", manifest.dump(2) + "\n");
}

int cmd_search(const Inputs& in, std::ostream& out, std::ostream& err) {
  const SearchProblem problem = in.config.problem();
  const auto [train, val] = load_search_data(in.config.data);
  SearchHooks hooks;
  hooks.after_round = [&](const TrainState& state, const RoundSummary& round) {
    write_file(in.out / "projection" / ("round_" + std::to_string(state.outer - 1) + ".csv"),
               trajectory_csv(round.projection));
    write_file(in.out / "checkpoint.json", checkpoint_to_json(state).dump() + "\n");
    out << "round " << state.outer - 1 << ": " << round.phase1_steps << " phase-I steps, lambda "
        << format_double(round.lambda) << ", projection " << round.projection.iterations << " steps, "
        << (round.projection.feasible ? "feasible" : "infeasible") << "\n";
  };
  const SearchReport report = run_search(problem, train, val, hooks);
  write_file(in.out / "arch.json", serialize_arch(report.arch));
  write_file(in.out / "search_log.csv", search_log_csv(report.log));
  write_file(in.out / "cost.csv", cost_report_csv(report.phi, report.exact, problem.box));
  json rounds = json::array();
  for (const RoundSummary& r : report.rounds) {
    rounds.push_back({{"phase1_steps", r.phase1_steps}, {"lambda", r.lambda},
                      {"projection_steps", r.projection.iterations}, {"feasible", r.projection.feasible},
                      {"phi", r.projection.phi}, {"exact", r.exact}});
  }
  const json summary = {{"phi", report.phi},         {"exact", report.exact},
                        {"feasible", report.feasible}, {"w_updates", report.w_updates},
                        {"rounds", rounds},           {"wall_seconds", report.wall_seconds}};
  write_file(in.out / "report.json", summary.dump(2) + "\n");
  write_manifest("search", in);
  out << "expected params " << format_double(report.phi[0]) << ", flops " << format_double(report.phi[1]) << "\n";
  out << "exact    params " << format_double(report.exact[0]) << ", flops " << format_double(report.exact[1])
      << "\n";
  if (!report.feasible) {
    err << "FEASIBLE: no -- the final expected cost lies outside the constraint box\n";
  } else {
    out << "FEASIBLE: yes\n";
  }
  out << "wrote " << (in.out / "arch.json").string() << "\n";
  return kOk;
}

int cmd_cost(const Inputs& in, std::ostream& out) {
  const NetworkPlan plan = in.config.problem().plan;
  const CostVector c = exact_cost(load_arch(in, plan), plan);
  const std::string csv = "params,flops\n" + format_double(c[0]) + "," + format_double(c[1]) + "\n";
  write_file(in.out / "cost.csv", csv);
  write_manifest("cost", in);
  out << csv;
  return kOk;
}

int cmd_eval(const Inputs& in, std::ostream& out) {
  const NetworkPlan plan = in.config.problem().plan;
  const DiscreteArch arch = load_arch(in, plan);
  const auto [train, val] = load_search_data(in.config.data);
  const RetrainMetrics m = retrain_eval(arch, plan, train, val, in.config.eval);
  const std::string csv = retrain_metrics_csv(m);
  write_file(in.out / "metrics.csv", csv);
  write_manifest("eval", in);
  out << csv;
  return kOk;
}

int cmd_export_dot(const Inputs& in, std::ostream& out) {
  const DiscreteArch arch = load_arch(in, in.config.problem().plan);
  const std::string dot = export_dot(arch);
  write_file(in.out / "arch.dot", dot);
  write_manifest("export-dot", in);
  out << dot;
  return kOk;
}

int cmd_enumerate(const Inputs& in, std::ostream& out) {
  const NetworkPlan plan = in.config.problem().plan;
  const MicroSpace space{plan, in.config.oracle.ceiling};
  const std::size_t score_epochs = in.config.oracle.score_epochs;
  std::optional<std::pair<Dataset, Dataset>> data;
  if (score_epochs > 0) data = load_search_data(in.config.data);

  // Scores are cached by arch hash and retrain settings.
  const fs::path cache_path = in.out / "score_cache.json";
  json cache = json::object();
  if (fs::exists(cache_path)) cache = parse_json(read_file(cache_path), cache_path.string());
  RetrainConfig rc = in.config.eval;
  rc.epochs = std::max<std::size_t>(score_epochs, 1);
  const std::string cache_key_suffix = hex64(fnv1a(in.config.to_json()["eval"].dump() +
                                                   in.config.to_json()["data"].dump() +
                                                   std::to_string(score_epochs)));

  std::vector<std::string> hashes;
  std::vector<ScoredArch> scored;
  for_each_arch(space, [&](const DiscreteArch& arch) {
    const std::string h = arch_hash(arch);
    ScoredArch s{exact_cost(arch, plan), 0.0};
    if (score_epochs > 0) {
      const std::string key = h + "-" + cache_key_suffix;
      if (cache.contains(key)) {
        s.score = cache[key].get<double>();
      } else {
        s.score = retrain_eval(arch, plan, data->first, data->second, rc).val_accuracy;
        cache[key] = s.score;
      }
    }
    write_file(in.out / "archs" / (h + ".json"), serialize_arch(arch));
    hashes.push_back(h);
    scored.push_back(s);
  });
  const std::vector<std::size_t> front = pareto_front(scored);
  std::vector<bool> on_front(scored.size(), false);
  for (std::size_t i : front) on_front[i] = true;
  std::ostringstream csv;
  csv << "arch_hash,params,flops,score,on_front\n";
  for (std::size_t i = 0; i < scored.size(); ++i) {
    csv << hashes[i] << ',' << format_double(scored[i].cost[0]) << ',' << format_double(scored[i].cost[1]) << ','
        << format_double(scored[i].score) << ',' << (on_front[i] ? 1 : 0) << '\n';
  }
  write_file(in.out / "pareto.csv", csv.str());
  if (score_epochs > 0) write_file(cache_path, cache.dump(2) + "\n");
  write_manifest("enumerate", in);
  out << scored.size() << " architectures, " << front.size() << " on the Pareto front\n";
  return kOk;
}

int dispatch(const std::string& command, const Inputs& in, std::ostream& out, std::ostream& err) {
  if (command == "search") return cmd_search(in, out, err);
  if (command == "cost") return cmd_cost(in, out);
  if (command == "eval") return cmd_eval(in, out);
  if (command == "export-dot") return cmd_export_dot(in, out);
  if (command == "enumerate") return cmd_enumerate(in, out);
  throw ConfigError("/command", "unknown command '" + command + "'");
}

int execute(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.command != "rerun") return dispatch(opt.command, resolve(opt), out, err);
  const json manifest = parse_json(read_file(opt.manifest_path), opt.manifest_path);
  if (!manifest.is_object() || !manifest.contains("command") || !manifest.contains("config")) {
    throw ConfigError("", "manifest needs 'command' and 'config'");
  }
  const std::string command = manifest["command"].get<std::string>();
  if (command == "rerun") throw ConfigError("/command", "a manifest cannot record a rerun");
  Options replay;
  replay.out_dir = opt.out_dir;
  std::optional<json> arch;
  if (manifest.contains("arch") && !manifest["arch"].is_null()) arch.emplace(manifest["arch"]);
  return dispatch(command, resolve(replay, std::optional<json>(std::in_place, manifest["config"]), arch), out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resource-constrained differentiable architecture search", "rcnas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(RCNAS_VERSION));
  Options opt;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool config, bool arch) {
    if (config) sub->add_option("--config", opt.config_path, "Run configuration (JSON)");
    if (arch) sub->add_option("--arch", opt.arch_path, "Architecture (JSON)")->required();
    sub->add_option("--out", opt.out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Seed for search and retraining (overrides config)");
    sub->add_option("--scope", opt.scope, "Cost scope: topk or fulldag");
  };
  add_common(app.add_subcommand("search", "Run the constrained search"), true, false);
  add_common(app.add_subcommand("cost", "Exact params and FLOPs of an architecture"), true, true);
  add_common(app.add_subcommand("enumerate", "Enumerate a micro space into a Pareto CSV"), true, false);
  add_common(app.add_subcommand("eval", "Retrain an architecture and report metrics"), true, true);
  add_common(app.add_subcommand("export-dot", "Render an architecture as Graphviz DOT"), true, true);
  auto* rerun = app.add_subcommand("rerun", "Replay a command from its manifest");
  rerun->add_option("--manifest", opt.manifest_path, "manifest.json of an earlier run")->required();
  rerun->add_option("--out", opt.out_dir, "Output directory (default: the recorded one)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << RCNAS_VERSION << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  opt.command = app.get_subcommands().front()->get_name();
  for (auto* sub : app.get_subcommands()) {
    if (sub->get_option_no_throw("--seed") && sub->count("--seed") > 0) opt.seed = seed;
  }

  try {
    return execute(opt, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace rcnas::cli

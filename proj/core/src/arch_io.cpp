// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/arch_io.hpp"

#include <sstream>

#include "rcnas/error.hpp"

namespace rcnas {

using nlohmann::json;

namespace {

std::size_t read_index(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(path + "/" + key, "unknown key");
  }
  for (const char* a : allowed) {
    if (!obj.contains(a)) throw ConfigError(path + "/" + a, "missing key");
  }
}

std::string node_label(bool connection, std::size_t node, std::size_t n_nodes) {
  if (connection) return node == 0 ? "in" : "out";
  if (node == 0) return "c_{k-2}";
  if (node == 1) return "c_{k-1}";
  if (node + 1 == n_nodes) return "c_{k}";
  return std::to_string(node - 2);
}

}  // namespace

json arch_to_json(const DiscreteArch& arch) {
  json cells = json::object();
  for (const auto& [kind, nodes] : arch.cells) {
    json list = json::array();
    for (const NodeChoice& nc : nodes) {
      json inputs = json::array();
      for (const ChosenInput& in : nc.inputs) {
        inputs.push_back({{"from", in.from}, {"op", std::string(op_name(in.op))}});
      }
      list.push_back({{"inputs", inputs}, {"node", nc.node}});
    }
    cells[kind.name()] = list;
  }
  return {{"cells", cells}, {"schema_version", kArchSchemaVersion}};
}

DiscreteArch arch_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "architecture document must be an object");
  check_keys(doc, {"cells", "schema_version"}, "");
  if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kArchSchemaVersion) {
    throw ConfigError("/schema_version", "unsupported version (expected " +
                                             std::to_string(kArchSchemaVersion) + ")");
  }
  const json& cells = doc["cells"];
  if (!cells.is_object() || cells.empty()) throw ConfigError("/cells", "expected a non-empty object");
  DiscreteArch arch;
  for (const auto& [name, nodes] : cells.items()) {
    const std::string path = "/cells/" + name;
    auto kind = CellKind::parse(name);
    if (!kind) throw ConfigError(path, "unknown cell kind");
    if (!nodes.is_array() || nodes.empty()) {
      throw ConfigError(path, "expected a non-empty array of intermediate nodes");
    }
    std::vector<NodeChoice> choices;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const std::string npath = path + "/" + std::to_string(n);
      const json& node = nodes[n];
      if (!node.is_object()) throw ConfigError(npath, "expected an object");
      check_keys(node, {"inputs", "node"}, npath);
      NodeChoice nc;
      nc.node = read_index(node["node"], npath + "/node");
      const json& inputs = node["inputs"];
      if (!inputs.is_array() || inputs.empty()) throw ConfigError(npath + "/inputs", "expected a non-empty array");
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::string ipath = npath + "/inputs/" + std::to_string(k);
        const json& in = inputs[k];
        if (!in.is_object()) throw ConfigError(ipath, "expected an object");
        check_keys(in, {"from", "op"}, ipath);
        if (!in["op"].is_string()) throw ConfigError(ipath + "/op", "expected a string");
        auto op = op_from_name(in["op"].get<std::string>());
        if (!op) throw ConfigError(ipath + "/op", "unknown operation '" + in["op"].get<std::string>() + "'");
        nc.inputs.push_back({read_index(in["from"], ipath + "/from"), *op});
      }
      choices.push_back(std::move(nc));
    }
    arch.cells.emplace(*kind, std::move(choices));
  }
  return arch;
}

std::string serialize_arch(const DiscreteArch& arch) {
  return arch_to_json(arch).dump(2) + "\n";
}

DiscreteArch deserialize_arch(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return arch_from_json(doc);
}

std::string export_dot(const DiscreteArch& arch) {
  std::ostringstream out;
  out << "digraph arch {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& [kind, nodes] : arch.cells) {
    const std::string k = kind.name();
    const bool connection = kind.type == CellKind::Type::kConnection;
    std::size_t n_nodes = 0;
    for (const NodeChoice& nc : nodes) n_nodes = std::max(n_nodes, nc.node + 2);
    auto id = [&](std::size_t node) { return "\"" + k + "_" + std::to_string(node) + "\""; };
    out << "  subgraph cluster_" << k << " {\n    label=\"" << k << "\";\n";
    for (std::size_t node = 0; node < (connection ? 2 : n_nodes); ++node) {
      out << "    " << id(node) << " [label=\"" << node_label(connection, node, n_nodes) << "\"];\n";
    }
    for (const NodeChoice& nc : nodes) {
      for (const ChosenInput& in : nc.inputs) {
        out << "    " << id(in.from) << " -> " << id(nc.node) << " [label=\"" << op_name(in.op) << "\"];\n";
      }
    }
    if (!connection) {
      for (const NodeChoice& nc : nodes) {
        out << "    " << id(nc.node) << " -> " << id(n_nodes - 1) << " [style=dashed];\n";
      }
    }
    out << "  }\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace rcnas

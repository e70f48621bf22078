// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "rcnas/cellgraph.hpp"

namespace rcnas {

inline constexpr int kArchSchemaVersion = 1;

/// Canonical form: sorted keys, nodes in index order, inputs by predecessor.
nlohmann::json arch_to_json(const DiscreteArch& arch);
/// Structural parse only; use validate_arch to check it against a plan.
/// Throws ConfigError with a JSON pointer on any schema violation.
DiscreteArch arch_from_json(const nlohmann::json& doc);

/// arch_to_json pretty-printed with a trailing newline.
std::string serialize_arch(const DiscreteArch& arch);
DiscreteArch deserialize_arch(const std::string& text);

/// Graphviz digraph, one cluster per kind. Op edges carry the op name as
/// label; the concatenation into the output node is drawn dashed, unlabeled.
std::string export_dot(const DiscreteArch& arch);

}  // namespace rcnas

// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcnas/costmodel.hpp"
#include "rcnas/data.hpp"
#include "rcnas/search.hpp"

namespace rcnas {

struct DataConfig {
  std::string generator = "shapes";  // or "cifar10"
  std::size_t n = 4096;
  std::size_t image_size = 16;
  std::size_t classes = 4;
  std::uint64_t seed = 7;
  double split = 0.5;
  std::uint64_t split_seed = 11;
  std::vector<std::string> cifar10_files;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct OracleConfig {
  std::uint64_t ceiling = 10000;
  std::size_t score_epochs = 5;
  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

/// Everything a CLI command needs. Every section and key is optional; missing
/// values take the defaults below, unknown keys are rejected.
struct RunConfig {
  DataConfig data;
  NetworkPlan plan;
  ConstraintBox box;
  ProjectionConfig projection;
  SearchConfig search;
  RetrainConfig eval;
  OracleConfig oracle;
  CostScope scope = CostScope::kTopK;
  std::string output_dir = "runs/default";

  /// Throws ConfigError with a JSON pointer to the first offending element.
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);
  /// Fully resolved document; infinite upper bounds are written as null.
  nlohmann::json to_json() const;
  void validate() const;
  SearchProblem problem() const;
};

/// Generates or loads the configured dataset, splits it into the search
/// halves and normalizes both with statistics of the first half.
std::pair<Dataset, Dataset> load_search_data(const DataConfig& cfg);

}  // namespace rcnas

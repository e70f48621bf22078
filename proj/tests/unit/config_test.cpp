// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "rcnas/config.hpp"
#include "rcnas/error.hpp"

namespace rcnas {
namespace {

using nlohmann::json;

std::string error_path(const json& doc) {
  try {
    RunConfig::from_json(doc);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

TEST(Config, EmptyDocumentTakesDefaults) {
  const RunConfig cfg = RunConfig::from_json(json::object());
  EXPECT_EQ(cfg.search.e_u, 150u);
  EXPECT_EQ(cfg.search.epochs, 50u);
  EXPECT_EQ(cfg.search.batch_size, 64u);
  EXPECT_EQ(cfg.projection.e_p, 500u);
  EXPECT_EQ(cfg.projection.adam.lr, 3e-4);
  EXPECT_EQ(cfg.projection.adam.beta1, 0.5);
  EXPECT_EQ(cfg.projection.adam.beta2, 0.999);
  EXPECT_EQ(cfg.plan.n_cells, 8u);
  EXPECT_EQ(cfg.plan.init_channels, 16u);
  EXPECT_EQ(cfg.plan.levels, 3u);
  EXPECT_EQ(cfg.data.n, 4096u);
  EXPECT_EQ(cfg.scope, CostScope::kTopK);
  EXPECT_TRUE(cfg.box.unbounded());
}

TEST(Config, UnknownKeysAreRejectedWithPath) {
  EXPECT_EQ(error_path({{"serach", json::object()}}), "/serach");
  EXPECT_EQ(error_path({{"search", {{"e_u", 5}, {"eu", 5}}}}), "/search/eu");
  EXPECT_EQ(error_path({{"constraints", {{"params", {{"upper", 1}, {"max", 2}}}}}}), "/constraints/params/max");
}

TEST(Config, TypeAndRangeErrorsNameTheField) {
  EXPECT_EQ(error_path({{"search", {{"e_u", "many"}}}}), "/search/e_u");
  EXPECT_EQ(error_path({{"search", {{"e_u", -1}}}}), "/search/e_u");
  EXPECT_EQ(error_path({{"plan", {{"op_set", {"zero", "laser"}}}}}), "/plan/op_set/1");
  EXPECT_EQ(error_path({{"scope", "local"}}), "/scope");
  EXPECT_EQ(error_path({{"constraints", {{"flops", {{"lower", 10}, {"upper", 5}}}}}}).rfind("/constraints", 0), 0u);
}

TEST(Config, ResolvedDocumentRoundTrips) {
  json doc = {{"plan", {{"cells", 4}, {"levels", 2}}},
              {"constraints", {{"params", {{"lower", 10}, {"upper", 2e5}}}, {"flops", {{"upper", nullptr}}}}},
              {"scope", "fulldag"},
              {"search", {{"seed", 9}}}};
  const RunConfig a = RunConfig::from_json(doc);
  EXPECT_TRUE(std::isinf(a.box.upper[1]));
  EXPECT_EQ(a.box.upper[0], 2e5);
  const json resolved = a.to_json();
  EXPECT_TRUE(resolved["constraints"]["flops"]["upper"].is_null());
  const RunConfig b = RunConfig::from_json(resolved);
  EXPECT_EQ(b.to_json(), resolved);
  EXPECT_EQ(b.plan, a.plan);
  EXPECT_EQ(b.search, a.search);
  EXPECT_EQ(b.scope, CostScope::kFullDag);
}

TEST(Config, ProblemCarriesDataShape) {
  const RunConfig cfg = RunConfig::from_json({{"data", {{"image_size", 12}, {"classes", 3}}}});
  const SearchProblem p = cfg.problem();
  EXPECT_EQ(p.plan.image_size, 12u);
  EXPECT_EQ(p.plan.n_classes, 3u);
  EXPECT_EQ(p.plan.input_channels, 3u);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(RunConfig::load("/nonexistent/config.json"), IoError);
}

TEST(Config, SearchDataIsNormalizedOnTrainHalf) {
  DataConfig d;
  d.n = 64;
  d.image_size = 8;
  const auto [train, val] = load_search_data(d);
  EXPECT_EQ(train.size() + val.size(), 64u);
  const Normalizer n = Normalizer::fit(train);
  for (double m : n.mean) EXPECT_NEAR(m, 0.0, 1e-12);
}

}  // namespace
}  // namespace rcnas

// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <regex>

#include "rcnas/arch_io.hpp"
#include "rcnas/error.hpp"

namespace rcnas {
namespace {

NetworkPlan plan_with(std::size_t nodes) {
  NetworkPlan plan;
  plan.n_cells = 4;
  plan.n_nodes = nodes;
  plan.levels = 1;
  return plan;
}

TEST(ArchIo, RoundTripsRandomArchs) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const NetworkPlan plan = plan_with(4 + i % 4);
    const DiscreteArch arch = derive_discrete(ArchParams::random(plan, rng, 1.0), plan);
    const std::string text = serialize_arch(arch);
    EXPECT_EQ(deserialize_arch(text), arch);
    EXPECT_EQ(serialize_arch(deserialize_arch(text)), text);
  }
}

TEST(ArchIo, CanonicalJsonIsVersioned) {
  const NetworkPlan plan = plan_with(4);
  const auto doc = arch_to_json(derive_discrete(ArchParams(plan), plan));
  EXPECT_EQ(doc.at("schema_version"), kArchSchemaVersion);
  EXPECT_TRUE(doc.at("cells").contains("normal0"));
  EXPECT_TRUE(doc.at("cells").contains("connection"));
}

TEST(ArchIo, EmptyNodeListIsSchemaError) {
  nlohmann::json doc = {{"schema_version", 1}, {"cells", {{"normal0", nlohmann::json::array()}}}};
  try {
    arch_from_json(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "/cells/normal0");
  }
}

TEST(ArchIo, MalformedDocumentsReportPaths) {
  EXPECT_THROW(deserialize_arch("{not json"), ConfigError);
  const NetworkPlan plan = plan_with(4);
  auto doc = arch_to_json(derive_discrete(ArchParams(plan), plan));
  doc["cells"]["normal0"][0]["inputs"][0]["op"] = "warp_drive";
  try {
    arch_from_json(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "/cells/normal0/0/inputs/0/op");
  }
  auto extra = arch_to_json(derive_discrete(ArchParams(plan), plan));
  extra["comment"] = "x";
  EXPECT_THROW(arch_from_json(extra), ConfigError);
  auto version = arch_to_json(derive_discrete(ArchParams(plan), plan));
  version["schema_version"] = 2;
  EXPECT_THROW(arch_from_json(version), ConfigError);
}

TEST(ArchIo, DotHasTwoLabelledEdgesPerIntermediate) {
  NetworkPlan plan = plan_with(5);  // two intermediates
  const DiscreteArch arch = derive_discrete(ArchParams(plan), plan);
  DiscreteArch one;
  one.cells[CellKind::normal(0)] = arch.cells.at(CellKind::normal(0));
  const std::string dot = export_dot(one);
  const std::regex labelled("->[^\\n]*label=");
  const std::regex dashed("->[^\\n]*style=dashed");
  const auto count = [&](const std::regex& re) {
    return std::distance(std::sregex_iterator(dot.begin(), dot.end(), re), std::sregex_iterator());
  };
  EXPECT_EQ(count(labelled), 4);
  EXPECT_EQ(count(dashed), 2);
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
}

}  // namespace
}  // namespace rcnas

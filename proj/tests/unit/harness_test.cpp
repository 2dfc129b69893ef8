/* Copyright 2026 The gradsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gradsim/config.hpp"
#include "gradsim/error.hpp"
#include "gradsim/experiment.hpp"
#include "gradsim/metrics.hpp"
#include "gradsim/presets.hpp"

namespace gradsim {
namespace {

using harness::parse_config;

std::string field_of(const std::string& json) {
  try {
    parse_config(json);
  } catch (const ConfigError& e) {
    return e.field_path();
  }
  return "<no error>";
}

TEST(Config, Minimal) {
  auto c = parse_config(R"({"schema": 1, "name": "tiny"})");
  EXPECT_EQ(c.name, "tiny");
  EXPECT_EQ(c.pipeline, harness::Pipeline::kTrain);
}

TEST(Config, ErrorsCarryFieldPaths) {
  EXPECT_EQ(field_of(R"({"name": "x"})"), "schema");
  EXPECT_EQ(field_of(R"({"schema": 2})"), "schema");
  EXPECT_EQ(field_of(R"({"schema": 1, "optimizer": {"etaa": 0.1}})"), "optimizer.etaa");
  EXPECT_EQ(field_of(R"({"schema": 1, "optimizer": {"eta": "fast"}})"), "optimizer.eta");
  EXPECT_EQ(field_of(R"({"schema": 1, "workload": {"kind": "resnet"}})"), "workload.kind");
  EXPECT_EQ(field_of(R"({"schema": 1, "network": {"failures": [{"time": 1}]}})"),
            "network.failures[0].node");
  EXPECT_EQ(field_of(R"({"schema": 1, "workload": {"dim": -3}})"), "workload.dim");
  EXPECT_EQ(field_of(R"({"schema": 1, "pipeline": "imagenet"})"), "pipeline");
  EXPECT_EQ(field_of("{not json"), "");
}

TEST(Config, PresetsRoundTripThroughJson) {
  for (const auto& p : harness::presets()) {
    auto c = harness::preset_config(p.name);
    EXPECT_NO_THROW(c.validate()) << p.name;
    const auto json = harness::to_json(c);
    EXPECT_EQ(harness::to_json(parse_config(json)), json) << p.name;
  }
}

TEST(Config, UnknownPreset) {
  EXPECT_THROW(harness::preset_config("imagenet-1-hour"), ConfigError);
}

TEST(Config, EveryPipelineHasAPreset) {
  std::vector<bool> seen(18, false);
  for (const auto& p : harness::presets()) {
    seen[static_cast<std::size_t>(p.make().pipeline)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_TRUE(seen[i]) << i;
}

TEST(Metrics, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) {
    EXPECT_EQ(std::stod(metrics::format_double(v)), v);
  }
}

TEST(Metrics, CsvRoundTrip) {
  std::vector<metrics::Record> rs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rs[i].step = i + 1;
    rs[i].loss = 1.0 / double(i + 3);
    rs[i].bytes_sent = 100 * i;
  }
  std::stringstream ss;
  metrics::write_csv(ss, rs);
  auto t = metrics::read_csv(ss);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.columns.front(), "step");
  EXPECT_EQ(std::stod(t.rows[1][t.column("loss")]), 0.25);
  EXPECT_THROW(t.column("accuracy"), ConfigError);
}

metrics::Table table(const std::vector<std::vector<std::string>>& rows) {
  metrics::Table t;
  t.columns = {"step", "sim_time", "loss"};
  t.rows = rows;
  return t;
}

std::vector<metrics::Check> spec(const std::string& text) {
  std::istringstream is(text);
  return metrics::parse_tolspec(is);
}

TEST(Compare, IdenticalRunsAreEqual) {
  auto a = table({{"1", "0.5", "2"}, {"2", "1.0", "1"}});
  EXPECT_TRUE(metrics::compare_runs(a, a, spec("loss equal\nsim_time equal\n")).pass());
}

TEST(Compare, Relations) {
  auto a = table({{"1", "0.5", "2.0"}, {"2", "1.0", "1.00"}});
  auto b = table({{"1", "0.7", "2.1"}, {"2", "1.5", "1.04"}});
  EXPECT_TRUE(metrics::compare_runs(a, b, spec("sim_time strictly-less")).pass());
  EXPECT_FALSE(metrics::compare_runs(b, a, spec("sim_time strictly-less")).pass());
  EXPECT_TRUE(metrics::compare_runs(a, b, spec("loss within-rel-tol 0.05")).pass());
  EXPECT_FALSE(metrics::compare_runs(a, b, spec("loss within-rel-tol 0.01")).pass());
  EXPECT_TRUE(metrics::compare_runs(a, b, spec("loss within-rel-tol 0.04 final")).pass());
  EXPECT_FALSE(metrics::compare_runs(a, b, spec("loss equal")).pass());
}

TEST(Compare, SchemaMismatch) {
  auto a = table({{"1", "0.5", "2"}});
  auto b = a;
  b.columns[2] = "accuracy";
  EXPECT_THROW(metrics::compare_runs(a, b, spec("loss equal")), ConfigError);
  EXPECT_THROW(metrics::compare_runs(a, a, spec("accuracy equal")), ConfigError);
}

TEST(Compare, RowCountMismatchFails) {
  auto a = table({{"1", "0.5", "2"}});
  auto b = table({{"1", "0.5", "2"}, {"2", "0.5", "2"}});
  EXPECT_FALSE(metrics::compare_runs(a, b, spec("loss equal")).pass());
  EXPECT_TRUE(metrics::compare_runs(a, b, spec("step equal final")).pass() == false);
}

TEST(Tolspec, Parsing) {
  auto checks = spec("# comment\n\nloss within-rel-tol 0.05 final\nsim_time strictly-less\n");
  ASSERT_EQ(checks.size(), 2u);
  EXPECT_EQ(checks[0].relation, metrics::Relation::kWithinRelTol);
  EXPECT_EQ(checks[0].tolerance, 0.05);
  EXPECT_EQ(checks[0].scope, metrics::Scope::kFinal);
  EXPECT_EQ(checks[1].scope, metrics::Scope::kAll);
  EXPECT_THROW(spec("loss within-rel-tol\n"), ConfigError);
  EXPECT_THROW(spec("loss roughly\n"), ConfigError);
  EXPECT_THROW(spec("loss equal sometimes\n"), ConfigError);
}

TEST(Summary, ParseWriteRoundTrip) {
  metrics::Summary s;
  s.set("name", std::string("run"));
  s.set("loss", 0.125);
  s.set("bytes", std::uint64_t{42});
  s.set("ok", true);
  std::istringstream is(s.to_string());
  auto back = metrics::Summary::parse(is);
  EXPECT_EQ(back.entries(), s.entries());
  EXPECT_EQ(*back.get("bytes"), "42");
  EXPECT_EQ(back.get("missing"), nullptr);
}

TEST(Experiment, SyncExactPresetPasses) {
  auto out = harness::run_experiment(harness::preset_config("sync-exact"));
  EXPECT_TRUE(out.pass());
  EXPECT_EQ(out.records.size(), 50u);
  EXPECT_NE(out.summary.get("final_loss"), nullptr);
}

TEST(Experiment, BytesMatchTrace) {
  auto c = harness::preset_config("allreduce-ring");
  auto out = harness::run_experiment(c);
  std::uint64_t trace_bytes = 0;
  std::istringstream is(out.trace);
  for (std::string line; std::getline(is, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() == 6 && f[2] == "send") trace_bytes += std::stoull(f[5]);
  }
  ASSERT_FALSE(out.records.empty());
  EXPECT_EQ(out.records.back().bytes_sent, trace_bytes);
}

TEST(Experiment, RunsAreByteIdentical) {
  auto c = harness::preset_config("softsync");
  auto a = harness::run_experiment(c);
  auto b = harness::run_experiment(c);
  EXPECT_EQ(a.metrics_csv(), b.metrics_csv());
  EXPECT_EQ(a.trace, b.trace);
}

TEST(Experiment, OutputPathsDefaultToName) {
  auto c = harness::preset_config("gossip");
  auto p = harness::output_paths(c, "/tmp/out");
  EXPECT_EQ(p.metrics, "/tmp/out/gossip.metrics.csv");
  EXPECT_EQ(p.trace, "/tmp/out/gossip.trace");
  EXPECT_EQ(p.summary, "/tmp/out/gossip.summary");
}

TEST(Experiment, Fingerprint) {
  std::vector<double> a{1.0, 2.0};
  std::vector<double> b{1.0, -2.0};
  EXPECT_EQ(harness::fnv1a(a), harness::fnv1a(a));
  EXPECT_NE(harness::fnv1a(a), harness::fnv1a(b));
  EXPECT_EQ(harness::fnv1a(std::string("")), 0xcbf29ce484222325ULL);
}

}  // namespace
}  // namespace gradsim

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
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gradsim/collectives.hpp"
#include "gradsim/error.hpp"
#include "gradsim/ftreduce.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/simnet.hpp"

namespace gradsim::ft {
namespace {

using tensor::GradientVector;

const sim::LatencyModel kNet{0.01, 1e-6, sim::Straggler::none(), 0};
const sim::SimOptions kSimOpts{0.05, true};

std::vector<GradientVector> inputs(std::size_t p, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradientVector> in;
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> v(len);
    for (auto& x : v) x = double(rng.below(1000)) - 500.0;
    in.emplace_back(std::move(v));
  }
  return in;
}

std::vector<double> oracle(const std::vector<GradientVector>& in) {
  std::vector<double> out(in[0].size(), 0.0);
  for (const auto& v : in) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return out;
}

void settle(sim::Simulator& sim) {
  while (sim.step()) {
  }
}

TEST(Majority, Arithmetic) {
  EXPECT_EQ(majority(3), 2u);
  EXPECT_EQ(majority(5), 3u);
  EXPECT_EQ(majority(1), 1u);
}

TEST(Options, EvenReplicaFactorRejected) {
  FtOptions o;
  o.replica_factor = 4;
  EXPECT_THROW(o.validate(), InvalidArgument);
}

TEST(Tolerant, FailureFreeMatchesBinaryBlocksBitForBit) {
  for (std::size_t p : {1u, 2u, 5u, 6u, 7u}) {
    Rng rng(p);
    std::vector<GradientVector> in;
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<double> v(33);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
      in.emplace_back(std::move(v));
    }
    sim::Simulator plain(p, kNet);
    auto bb = coll::binary_blocks_all_reduce(plain, in);

    sim::Simulator sim(p * 3, kNet, kSimOpts);
    auto r = tolerant_all_reduce(sim, in);
    EXPECT_EQ(r.elections, 0u);
    EXPECT_EQ(r.split_votes, 0u);
    EXPECT_EQ(r.safety_violations, 0u);
    EXPECT_EQ(r.data_messages, bb.messages) << p;
    for (std::size_t i = 0; i < p; ++i) {
      EXPECT_TRUE(r.outputs[i].bit_equal(bb.outputs[i])) << "p=" << p << " i=" << i;
    }
  }
}

TEST(Tolerant, LeaderKilledMidReduce) {
  auto in = inputs(6, 64, 1);
  sim::Simulator probe(18, kNet, kSimOpts);
  const double span = tolerant_all_reduce(probe, in).elapsed;

  for (std::size_t g = 0; g < 6; ++g) {
    sim::Simulator sim(18, kNet, kSimOpts);
    sim.inject_failure(replica_node(g, 0, 3), span / 2, sim::FailureKind::kCrash);
    FtOptions o;
    o.seed = g;
    auto r = tolerant_all_reduce(sim, in, o);
    EXPECT_GE(r.elections, 1u) << g;
    EXPECT_EQ(r.safety_violations, 0u);
    EXPECT_EQ(audit_logs(r.replicas), 0u);
    for (const auto& out : r.outputs) EXPECT_EQ(out.data(), oracle(in)) << g;
  }
}

TEST(Tolerant, FiveReplicasSurviveTwoDeadFollowers) {
  auto in = inputs(2, 16, 2);
  sim::Simulator sim(10, kNet, kSimOpts);
  sim.inject_failure(replica_node(0, 3, 5), 0.0, sim::FailureKind::kCrash);
  sim.inject_failure(replica_node(0, 4, 5), 0.0, sim::FailureKind::kCrash);
  settle(sim);
  FtOptions o;
  o.replica_factor = 5;
  auto r = tolerant_all_reduce(sim, in, o);
  EXPECT_EQ(r.elections, 0u);
  for (const auto& out : r.outputs) EXPECT_EQ(out.data(), oracle(in));
  // The leader and two live followers hold every committed entry.
  for (const auto& rep : r.replicas) {
    if (rep.group == 0 && rep.alive) {
      EXPECT_GT(rep.commit_index, 0u);
    }
  }
}

TEST(Tolerant, LostMajorityNamesGroup) {
  auto in = inputs(4, 16, 3);
  sim::Simulator sim(12, kNet, kSimOpts);
  sim.inject_failure(replica_node(2, 1, 3), 0.0, sim::FailureKind::kCrash);
  sim.inject_failure(replica_node(2, 2, 3), 0.0, sim::FailureKind::kCrash);
  settle(sim);
  try {
    tolerant_all_reduce(sim, in);
    FAIL() << "expected GroupUnavailable";
  } catch (const GroupUnavailable& e) {
    EXPECT_EQ(e.group(), 2u);
  }
}

TEST(Tolerant, LostMajorityMidRunNeverReturnsResult) {
  auto in = inputs(6, 64, 4);
  double span;
  {
    sim::Simulator sim(18, kNet, kSimOpts);
    span = tolerant_all_reduce(sim, in).elapsed;
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, 77);
    sim::Simulator sim(18, kNet, kSimOpts);
    const std::size_t g = rng.below(6);
    sim.inject_failure(replica_node(g, 0, 3), rng.uniform(0.0, span), sim::FailureKind::kCrash);
    sim.inject_failure(replica_node(g, 1, 3), rng.uniform(0.0, span), sim::FailureKind::kCrash);
    FtOptions o;
    o.seed = seed;
    EXPECT_THROW(
        {
          try {
            tolerant_all_reduce(sim, in, o);
          } catch (const GroupUnavailable& e) {
            EXPECT_EQ(e.group(), g);
            throw;
          }
        },
        GroupUnavailable);
  }
}

TEST(Election, ForcedSplitVoteThenRecovery) {
  auto in = inputs(3, 16, 5);
  sim::Simulator sim(9, kNet, kSimOpts);
  sim.inject_failure(replica_node(1, 0, 3), 0.0, sim::FailureKind::kCrash);
  settle(sim);
  FtOptions o;
  // Both followers of group 1 time out together once, so each votes for
  // itself and neither can win that term.
  o.forced_timeouts.push_back(
      {0.0, 0.3, {replica_node(1, 1, 3), replica_node(1, 2, 3)}});
  auto r = tolerant_all_reduce(sim, in, o);
  EXPECT_GE(r.split_votes, 1u);
  EXPECT_GE(r.election_rounds, 3u);
  EXPECT_EQ(r.elections, 1u);
  EXPECT_EQ(r.safety_violations, 0u);
  for (const auto& out : r.outputs) EXPECT_EQ(out.data(), oracle(in));
  std::size_t leaders = 0;
  for (const auto& rep : r.replicas) {
    if (rep.group == 1 && rep.alive && rep.role == Role::kLeader) ++leaders;
  }
  EXPECT_EQ(leaders, 1u);
}

TEST(Election, TermsOnlyGrow) {
  auto in = inputs(6, 64, 6);
  sim::Simulator sim(18, kNet, kSimOpts);
  for (std::size_t g = 0; g < 6; ++g) {
    sim.inject_failure(replica_node(g, g % 3, 3), 0.05 * double(g + 1),
                       sim::FailureKind::kCrash);
  }
  auto r = tolerant_all_reduce(sim, in);
  for (const auto& rep : r.replicas) {
    for (std::size_t i = 1; i < rep.log.size(); ++i) {
      EXPECT_LE(rep.log[i - 1].term, rep.log[i].term);
    }
  }
  for (const auto& out : r.outputs) EXPECT_EQ(out.data(), oracle(in));
}

TEST(Audit, DetectsDivergence) {
  ReplicaReport a, b;
  a.group = b.group = 0;
  ReductionEntry e;
  e.term = 1;
  e.values = {1.0};
  a.log = {e};
  b.log = {e};
  b.log[0].values = {2.0};
  a.commit_index = b.commit_index = 1;
  std::vector<ReplicaReport> reps{a, b};
  EXPECT_EQ(audit_logs(reps), 1u);
  reps[1].commit_index = 0;
  EXPECT_EQ(audit_logs(reps), 0u);
}

TEST(Golden, FailureFreeTrace) {
  sim::Simulator sim(9, kNet, kSimOpts);
  tolerant_all_reduce(sim, inputs(3, 6, 9));
  const std::string got = sim.trace().to_string();
  const std::string path = std::string(GRADSIM_FIXTURE_DIR) + "/ft_p3_k3.trace";
  if (std::getenv("GRADSIM_REGEN_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << got;
    GTEST_SKIP() << "rewrote " << path;
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing fixture " << path;
  std::stringstream want;
  want << in.rdbuf();
  EXPECT_EQ(got, want.str());
}

}  // namespace
}  // namespace gradsim::ft

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

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradsim/collectives.hpp"
#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/schedule.hpp"
#include "gradsim/simnet.hpp"
#include "gradsim/tensor.hpp"

namespace gradsim::coll {
namespace {

using tensor::GradientVector;

const sim::LatencyModel kUnitStep{1.0, 0.0, sim::Straggler::none(), 0};

std::vector<GradientVector> constant_inputs(std::size_t p, std::size_t len,
                                            double (*value)(std::size_t)) {
  std::vector<GradientVector> in;
  for (std::size_t i = 0; i < p; ++i) in.push_back(GradientVector::filled(len, value(i)));
  return in;
}

std::vector<GradientVector> random_inputs(std::size_t p, std::size_t len,
                                          std::uint64_t seed) {
  std::vector<GradientVector> in;
  Rng rng(seed);
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    in.emplace_back(std::move(v));
  }
  return in;
}

// Independent oracle: per element, a plain left-to-right sum.
std::vector<double> oracle_sum(const std::vector<GradientVector>& in) {
  std::vector<double> out(in[0].size(), 0.0);
  for (const auto& v : in) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return out;
}

CollectiveResult run(Algorithm a, const std::vector<GradientVector>& in,
                     const sim::LatencyModel& lat = kUnitStep,
                     CollectiveOptions opts = {}) {
  sim::Simulator sim(in.size(), lat);
  if (a == Algorithm::kHierarchical && opts.group_size == 0) opts.group_size = 4;
  return all_reduce(sim, a, in, opts);
}

TEST(Ring, SingleNodeSendsNothing) {
  auto in = random_inputs(1, 9, 1);
  auto r = run(Algorithm::kRing, in);
  EXPECT_EQ(r.messages, 0u);
  EXPECT_EQ(r.elapsed, 0.0);
  EXPECT_TRUE(r.outputs[0].bit_equal(in[0]));
}

TEST(Ring, ScatterReduceOwnsOneReducedChunk) {
  auto in = constant_inputs(4, 8, [](std::size_t i) { return double(i); });
  sim::Simulator sim(4, kUnitStep);
  auto sr = ring_scatter_reduce(sim, in);
  EXPECT_EQ(sr.messages, 12u);
  EXPECT_DOUBLE_EQ(sr.elapsed, 3.0);
  std::set<std::size_t> begins;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(sr.chunks[k].size(), sr.owned[k].size());
    for (double x : sr.chunks[k].data()) EXPECT_EQ(x, 6.0);
    begins.insert(sr.owned[k].begin);
  }
  EXPECT_EQ(begins.size(), 4u);
}

TEST(Ring, AllGatherAfterScatterOfOnes) {
  auto in = constant_inputs(4, 10, [](std::size_t) { return 1.0; });
  sim::Simulator sim(4, kUnitStep);
  auto sr = ring_scatter_reduce(sim, in);
  auto ag = ring_all_gather(sim, sr, 10);
  EXPECT_EQ(ag.messages, 12u);
  for (const auto& out : ag.outputs) {
    EXPECT_EQ(out.data(), std::vector<double>(10, 4.0));
  }
}

TEST(Ring, AllGatherSingleNodeIsIdentity) {
  auto in = random_inputs(1, 5, 3);
  sim::Simulator sim(1, kUnitStep);
  auto sr = ring_scatter_reduce(sim, in);
  auto ag = ring_all_gather(sim, sr, 5);
  EXPECT_TRUE(ag.outputs[0].bit_equal(in[0]));
}

TEST(Ring, FourNodesTakeSixSteps) {
  auto r = run(Algorithm::kRing, random_inputs(4, 64, 2));
  EXPECT_EQ(r.elapsed, 6.0);
  EXPECT_EQ(r.messages, 24u);
}

TEST(Ring, ElapsedIsTwoPMinusOne) {
  for (std::size_t p = 1; p <= 12; ++p) {
    auto r = run(Algorithm::kRing, random_inputs(p, 40, p));
    EXPECT_EQ(r.elapsed, 2.0 * double(p - 1)) << p;
  }
}

TEST(Rhd, TwoNodesHandTrace) {
  std::vector<GradientVector> in{GradientVector({1.0, 2.0}), GradientVector({3.0, 4.0})};
  auto r = run(Algorithm::kRecursiveHalvingDoubling, in);
  for (const auto& out : r.outputs) EXPECT_EQ(out.data(), (std::vector<double>{4.0, 6.0}));
  EXPECT_EQ(r.elapsed, 2.0);
  EXPECT_EQ(r.messages, 4u);
}

TEST(Rhd, PowerOfTwoTakesTwoLogP) {
  for (std::size_t p : {2u, 4u, 8u, 16u, 32u}) {
    auto r = run(Algorithm::kRecursiveHalvingDoubling, random_inputs(p, 64, p));
    EXPECT_EQ(r.elapsed, 2.0 * std::log2(double(p))) << p;
  }
}

TEST(Rhd, SixNodeLayout) {
  auto layout = rhd_layout(6);
  EXPECT_EQ(layout.pz, 4u);
  EXPECT_EQ(layout.r, 2u);
  EXPECT_EQ(layout.core, (std::vector<std::uint32_t>{0, 2, 4, 5}));
}

TEST(Rhd, NonPowerOfTwoAddsFoldAndReturn) {
  // Fold (1) + core 2*log2(4) (4) + return (1).
  auto r = run(Algorithm::kRecursiveHalvingDoubling, random_inputs(6, 64, 6));
  EXPECT_EQ(r.elapsed, 6.0);
}

TEST(Rhd, FoldedNodesIdleDuringCore) {
  for (std::size_t p = 3; p <= 33; ++p) {
    const auto layout = rhd_layout(p);
    auto r = run(Algorithm::kRecursiveHalvingDoubling, random_inputs(p, 64, p));
    std::size_t idle = 0;
    for (const auto& a : r.activity) {
      if (a.in_phase(Phase::kScatterReduce) + a.in_phase(Phase::kAllGather) == 0) ++idle;
    }
    EXPECT_EQ(idle, layout.r) << p;
  }
}

TEST(BinaryBlocks, Decompose) {
  EXPECT_EQ(binary_blocks_decompose(600).blocks,
            (std::vector<std::size_t>{512, 64, 16, 8}));
  EXPECT_EQ(binary_blocks_decompose(8).blocks, (std::vector<std::size_t>{8}));
  EXPECT_EQ(binary_blocks_decompose(7).blocks, (std::vector<std::size_t>{4, 2, 1}));
}

TEST(BinaryBlocks, DecomposeIsBinaryExpansion) {
  for (std::size_t p = 1; p <= 1024; ++p) {
    auto d = binary_blocks_decompose(p);
    std::size_t sum = 0;
    for (std::size_t i = 0; i < d.blocks.size(); ++i) {
      const std::size_t b = d.blocks[i];
      ASSERT_EQ(b & (b - 1), 0u);
      ASSERT_NE(p & b, 0u);
      if (i > 0) {
        ASSERT_LT(b, d.blocks[i - 1]);
      }
      sum += b;
    }
    ASSERT_EQ(sum, p);
    ASSERT_EQ(d.assignment.size(), p);
    for (std::size_t i = 0; i < p; ++i) {
      const auto slot = d.assignment[i];
      ASSERT_EQ(d.first[slot.block] + slot.rank, i);
    }
  }
}

TEST(BinaryBlocks, SingleBlockMatchesRhd) {
  auto in = random_inputs(8, 100, 8);
  auto bb = run(Algorithm::kBinaryBlocks, in);
  auto rhd = run(Algorithm::kRecursiveHalvingDoubling, in);
  EXPECT_EQ(bb.elapsed, rhd.elapsed);
  EXPECT_EQ(bb.messages, rhd.messages);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_TRUE(bb.outputs[i].bit_equal(rhd.outputs[i]));
}

TEST(BinaryBlocks, TwelveOnes) {
  auto in = constant_inputs(12, 30, [](std::size_t) { return 1.0; });
  auto r = run(Algorithm::kBinaryBlocks, in);
  for (const auto& out : r.outputs) EXPECT_EQ(out.data(), std::vector<double>(30, 12.0));
}

TEST(BinaryBlocks, SevenHasNoFullyIdleNode) {
  auto in = random_inputs(7, 64, 7);
  auto bb = run(Algorithm::kBinaryBlocks, in);
  auto rhd = run(Algorithm::kRecursiveHalvingDoubling, in);
  EXPECT_EQ(bb.fully_idle(), 0u);
  auto oracle = oracle_sum(in);
  for (const auto& out : bb.outputs) {
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      EXPECT_NEAR(out[i], oracle[i], 1e-12 * 7);
    }
  }
  std::size_t rhd_core_idle = 0;
  for (const auto& a : rhd.activity) {
    if (a.in_phase(Phase::kScatterReduce) + a.in_phase(Phase::kAllGather) == 0) {
      ++rhd_core_idle;
    }
  }
  EXPECT_EQ(rhd_core_idle, 3u);
}

TEST(Hierarchical, SixteenInFoursMatchesOracle) {
  auto in = constant_inputs(16, 20, [](std::size_t i) { return double(i * i); });
  CollectiveOptions opts;
  opts.group_size = 4;
  auto r = run(Algorithm::kHierarchical, in, kUnitStep, opts);
  for (const auto& out : r.outputs) EXPECT_EQ(out.data(), oracle_sum(in));
  // Gather 1 + ring over 4 masters 2*(4-1) + broadcast 1.
  EXPECT_EQ(r.elapsed, 8.0);
}

TEST(Hierarchical, MasterRingHasSixSteps) {
  auto s = hierarchical_schedule(16, 100, 4);
  std::set<std::pair<int, std::uint32_t>> ring_steps;
  for (const auto& op : s.ops[0]) {
    if (op.phase == Phase::kScatterReduce || op.phase == Phase::kAllGather) {
      ring_steps.insert({int(op.phase), op.step});
    }
  }
  EXPECT_EQ(ring_steps.size(), 6u);
  // Followers never touch the ring.
  for (const auto& op : s.ops[1]) {
    EXPECT_TRUE(op.phase == Phase::kGroupGather || op.phase == Phase::kGroupBroadcast);
  }
}

TEST(Hierarchical, OneGroupIsGatherBroadcast) {
  auto in = random_inputs(5, 16, 5);
  CollectiveOptions opts;
  opts.group_size = 5;
  auto r = run(Algorithm::kHierarchical, in, kUnitStep, opts);
  EXPECT_EQ(r.messages, 8u);
  EXPECT_EQ(r.elapsed, 2.0);
}

TEST(AllAlgorithms, AverageDividesOnce) {
  auto in = constant_inputs(6, 7, [](std::size_t i) { return double(i + 1); });
  CollectiveOptions opts;
  opts.op = tensor::ReduceOp::average(6);
  for (auto a : {Algorithm::kRing, Algorithm::kRecursiveHalvingDoubling,
                 Algorithm::kBinaryBlocks, Algorithm::kHierarchical}) {
    auto r = run(a, in, kUnitStep, opts);
    for (const auto& out : r.outputs) EXPECT_EQ(out.data(), std::vector<double>(7, 3.5));
  }
}

TEST(AllAlgorithms, IntegerDataExactAndAgree) {
  for (std::size_t p = 1; p <= 20; ++p) {
    for (std::size_t len : {1u, 5u, 64u}) {
      std::vector<GradientVector> in;
      Rng rng(p * 1000 + len);
      for (std::size_t i = 0; i < p; ++i) {
        std::vector<double> v(len);
        for (auto& x : v) x = double(rng.below(2001)) - 1000.0;
        in.emplace_back(std::move(v));
      }
      const auto oracle = oracle_sum(in);
      for (auto a : {Algorithm::kRing, Algorithm::kRecursiveHalvingDoubling,
                     Algorithm::kBinaryBlocks, Algorithm::kHierarchical}) {
        auto r = run(a, in);
        for (const auto& out : r.outputs) {
          ASSERT_EQ(out.data(), oracle) << to_string(a) << " p=" << p << " len=" << len;
        }
      }
    }
  }
}

TEST(AllAlgorithms, AllNodesFinishIdentical) {
  auto in = random_inputs(13, 1000, 13);
  for (auto a : {Algorithm::kRing, Algorithm::kRecursiveHalvingDoubling,
                 Algorithm::kBinaryBlocks, Algorithm::kHierarchical}) {
    auto r = run(a, in);
    for (const auto& out : r.outputs) EXPECT_TRUE(out.bit_equal(r.outputs[0]));
  }
}

TEST(Schedule, EverySendHasOneReceive) {
  for (std::size_t p = 1; p <= 33; ++p) {
    for (auto a : {Algorithm::kRing, Algorithm::kRecursiveHalvingDoubling,
                   Algorithm::kBinaryBlocks, Algorithm::kHierarchical}) {
      EXPECT_NO_THROW(make_schedule(a, p, 17, 3).validate());
    }
  }
}

TEST(Schedule, AlgorithmNames) {
  EXPECT_EQ(algorithm_from_string("ring"), Algorithm::kRing);
  EXPECT_EQ(algorithm_from_string("halving-doubling"),
            Algorithm::kRecursiveHalvingDoubling);
  EXPECT_EQ(algorithm_from_string("binary-blocks"), Algorithm::kBinaryBlocks);
  EXPECT_THROW(algorithm_from_string("tree"), InvalidArgument);
}

TEST(Failure, CrashNamesDeadNode) {
  auto in = random_inputs(4, 64, 4);
  sim::Simulator sim(4, kUnitStep, {0.5, true});
  sim.inject_failure(2, 2.5, sim::FailureKind::kCrash);
  try {
    ring_all_reduce(sim, in);
    FAIL() << "expected CollectiveFailed";
  } catch (const CollectiveFailed& e) {
    EXPECT_EQ(e.dead_nodes(), (std::vector<std::uint32_t>{2}));
  }
}

TEST(ChunkCodec, RoundTrip) {
  ChunkHeader h{7, Phase::kBlockUp, 3, 11, {4, 9}};
  std::vector<double> vals{1.5, -2.0, 3.25, 0.0, 8.0};
  auto bytes = encode_chunk(h, vals, tensor::Precision::kSingle);
  GradientVector back;
  auto h2 = decode_chunk(bytes, back);
  EXPECT_EQ(h2.collective_id, 7u);
  EXPECT_EQ(h2.phase, Phase::kBlockUp);
  EXPECT_EQ(h2.step, 3u);
  EXPECT_EQ(h2.tag, 11u);
  EXPECT_EQ(h2.range, (Range{4, 9}));
  EXPECT_EQ(back.data(), vals);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_chunk(bytes, back), DecodeError);
}

TEST(BlobGather, EveryoneSeesEveryBlob) {
  std::vector<std::vector<std::uint8_t>> blobs;
  for (std::uint8_t i = 0; i < 5; ++i) blobs.push_back(std::vector<std::uint8_t>(i + 1, i));
  sim::Simulator sim(5, kUnitStep);
  auto r = all_gather_blobs(sim, blobs);
  EXPECT_EQ(r.elapsed, 4.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.blobs[i], blobs);
}

// Golden traces pin the exact message schedule. Set GRADSIM_REGEN_GOLDEN=1
// to rewrite them after an intentional change.
std::string golden_trace(Algorithm a, std::size_t p) {
  sim::LatencyModel lat{1.0, 1e-3, sim::Straggler::none(), 0};
  sim::Simulator sim(p, lat);
  all_reduce(sim, a, random_inputs(p, 10, 99));
  return sim.trace().to_string();
}

class Golden : public ::testing::TestWithParam<std::tuple<Algorithm, std::size_t>> {};

TEST_P(Golden, TraceMatchesFixture) {
  const auto [a, p] = GetParam();
  const std::string path = std::string(GRADSIM_FIXTURE_DIR) + "/" + to_string(a) +
                           "_p" + std::to_string(p) + ".trace";
  const std::string got = golden_trace(a, p);
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

INSTANTIATE_TEST_SUITE_P(
    Fixtures, Golden,
    ::testing::Combine(::testing::Values(Algorithm::kRing,
                                         Algorithm::kRecursiveHalvingDoubling,
                                         Algorithm::kBinaryBlocks),
                       ::testing::Values(2u, 4u, 6u, 7u)),
    [](const auto& info) {
      std::string name = to_string(std::get<0>(info.param));
      for (auto& c : name) {
        if (c == '-') c = '_';
      }
      return name + "_p" + std::to_string(std::get<1>(info.param));
    });

}  // namespace
}  // namespace gradsim::coll

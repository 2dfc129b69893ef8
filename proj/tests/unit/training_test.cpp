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

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gradsim/error.hpp"
#include "gradsim/training.hpp"
#include "gradsim/workload.hpp"

namespace gradsim::train {
namespace {

workload::WorkloadSpec quadratic(double noise = 0.01) {
  workload::WorkloadSpec spec;
  spec.dim = 20;
  spec.size = 1024;
  spec.seed = 3;
  spec.noise = noise;
  return spec;
}

NetworkOptions net(double startup = 0.01) {
  NetworkOptions n;
  n.latency.startup = startup;
  n.latency.per_byte = 1e-9;
  n.compute_time = 0.1;
  n.sim.drop_notify_delay = 0.05;
  return n;
}

optim::Hyperparams hp(double eta, std::size_t b) {
  optim::Hyperparams h;
  h.eta = eta;
  h.batch_size = b;
  return h;
}

TEST(SyncSgd, BitIdenticalToUnionBatch) {
  auto w = workload::generate_workload(quadratic(1.0));
  SyncOptions s;
  s.hp = hp(0.05, 8);
  s.workers = 4;
  s.steps = 50;
  s.net = net();
  auto dist = sync_sgd(*w, s);

  SingleNodeOptions o;
  o.hp = s.hp;
  o.steps = 50;
  o.micro_batches = 4;
  auto single = single_node_sgd(*w, o);

  ASSERT_EQ(dist.weights.size(), single.weights.size());
  for (std::size_t i = 0; i < dist.weights.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(dist.weights[i]),
              std::bit_cast<std::uint64_t>(single.weights[i]));
  }
  ASSERT_EQ(dist.records.size(), single.records.size());
  for (std::size_t t = 0; t < dist.records.size(); ++t) {
    EXPECT_EQ(dist.records[t].loss, single.records[t].loss);
  }
}

TEST(SyncSgd, BackupsCutRoundTime) {
  auto w = workload::generate_workload(quadratic(1.0));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyncOptions s;
    s.hp = hp(0.02, 8);
    s.workers = 12;
    s.backups = 4;
    s.steps = 10;
    s.net = net(1.0);
    s.net.latency.per_byte = 0.0;
    s.net.latency.straggler = sim::Straggler::default_calibration();
    s.net.latency.seed = seed;
    auto backup = sync_sgd(*w, s);
    s.workers = 16;
    s.backups = 0;
    auto barrier = sync_sgd(*w, s);
    EXPECT_LT(backup.sim_time, barrier.sim_time) << seed;
    // Late gradients of the final round are still in flight when it ends.
    EXPECT_GE(backup.discarded, 4u * (s.steps - 1) - 4u);
    EXPECT_LE(backup.discarded, 4u * s.steps);
    EXPECT_EQ(barrier.discarded, 0u);
  }
}

TEST(AsyncSgd, OneSoftsyncHasNoStaleness) {
  auto w = workload::generate_workload(quadratic());
  AsyncOptions a;
  a.hp = hp(0.05, 4);
  a.async = {8, 1};
  a.updates = 50;
  a.net = net();
  auto r = async_sgd(*w, a);
  ASSERT_FALSE(r.staleness.empty());
  for (auto s : r.staleness) EXPECT_EQ(s, 0u);

  SyncOptions sync;
  sync.hp = a.hp;
  sync.workers = 8;
  sync.steps = 50;
  sync.net = net();
  EXPECT_EQ(r.weights, sync_sgd(*w, sync).weights);
}

TEST(AsyncSgd, FullyAsyncSeesStaleness) {
  auto w = workload::generate_workload(quadratic());
  AsyncOptions a;
  a.hp = hp(0.05, 4);
  a.async = {8, 8};
  a.updates = 200;
  a.net = net();
  auto r = async_sgd(*w, a);
  std::uint64_t max_s = 0;
  for (auto s : r.staleness) max_s = std::max(max_s, s);
  EXPECT_GT(max_s, 0u);
}

TEST(DgcSgd, ZeroSparsityEqualsDense) {
  auto w = workload::generate_workload(quadratic(1.0));
  DgcOptions d;
  d.hp = hp(0.01, 8);
  d.workers = 4;
  d.steps = 50;
  d.dgc.sparsity = 0.0;
  d.dgc.warmup = false;
  d.dgc.mask_momentum = false;
  d.net = net();
  auto sparse = dgc_sgd(*w, d);
  d.dense = true;
  auto dense = dgc_sgd(*w, d);
  for (std::size_t i = 0; i < dense.weights.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(sparse.weights[i]),
              std::bit_cast<std::uint64_t>(dense.weights[i]));
  }
}

TEST(DgcSgd, BytesMatchTrace) {
  auto w = workload::generate_workload(quadratic(1.0));
  DgcOptions d;
  d.hp = hp(0.01, 8);
  d.steps = 20;
  d.dgc.sparsity = 0.9;
  d.net = net();
  auto r = dgc_sgd(*w, d);
  ASSERT_TRUE(r.trace.has_value());
  EXPECT_EQ(r.bytes_sent, r.trace->bytes_sent());
  EXPECT_EQ(r.records.back().bytes_sent, r.bytes_sent);
}

TEST(MixedPrecision, OverflowCountsSkips) {
  auto w = workload::generate_workload(quadratic(1.0));
  MixedPrecisionOptions m;
  m.hp = hp(0.01, 8);
  m.steps = 5;
  m.loss_scale.scale = 1e9;
  auto r = mixed_precision_sgd(*w, m);
  EXPECT_EQ(r.skipped, 5u);
  // The master copy is single precision.
  auto init = w->initial_weights();
  for (auto& v : init) v = static_cast<double>(static_cast<float>(v));
  EXPECT_EQ(r.weights, init);
}

TEST(AllReduceSgd, ToleratesReplicaCrash) {
  auto w = workload::generate_workload(quadratic());
  AllReduceSgdOptions a;
  a.hp = hp(0.05, 4);
  a.workers = 6;
  a.steps = 20;
  a.algorithm = coll::Algorithm::kBinaryBlocks;
  a.net = net();
  auto plain = allreduce_sgd(*w, a);
  a.fault_tolerant = true;
  a.net.failures.push_back({4, 0.5, sim::FailureKind::kCrash, 1.0});
  auto ft = allreduce_sgd(*w, a);
  EXPECT_EQ(ft.weights, plain.weights);
}

TEST(AllReduceSgd, PlainCollectiveFailsOnCrash) {
  auto w = workload::generate_workload(quadratic());
  AllReduceSgdOptions a;
  a.hp = hp(0.05, 4);
  a.workers = 4;
  a.steps = 20;
  a.net = net();
  a.net.failures.push_back({2, 0.5, sim::FailureKind::kCrash, 1.0});
  EXPECT_THROW(allreduce_sgd(*w, a), CollectiveFailed);
}

// Each variant reaches f(w) - f(w*) < 1e-4 on the 20-dimensional quadratic
// within the step budget given here.
constexpr double kTarget = 1e-4;

TEST(Convergence, SingleNode) {
  auto w = workload::generate_workload(quadratic());
  SingleNodeOptions o;
  o.hp = hp(0.05, 32);
  o.steps = 300;
  EXPECT_LT(single_node_sgd(*w, o).final_loss(), kTarget);
}

TEST(Convergence, Momentum) {
  auto w = workload::generate_workload(quadratic());
  DgcOptions d;
  d.hp = hp(0.02, 8);
  d.steps = 300;
  d.dense = true;
  d.net = net();
  EXPECT_LT(dgc_sgd(*w, d).final_loss(), kTarget);
}

TEST(Convergence, Sync) {
  auto w = workload::generate_workload(quadratic());
  SyncOptions s;
  s.hp = hp(0.1, 8);
  s.steps = 300;
  s.net = net();
  EXPECT_LT(sync_sgd(*w, s).final_loss(), kTarget);
}

TEST(Convergence, SyncWithBackups) {
  auto w = workload::generate_workload(quadratic());
  SyncOptions s;
  s.hp = hp(0.1, 8);
  s.workers = 12;
  s.backups = 4;
  s.steps = 300;
  s.net = net();
  s.net.latency.straggler = sim::Straggler::default_calibration();
  EXPECT_LT(sync_sgd(*w, s).final_loss(), kTarget);
}

TEST(Convergence, AllReduce) {
  auto w = workload::generate_workload(quadratic());
  for (auto alg : {coll::Algorithm::kRing, coll::Algorithm::kRecursiveHalvingDoubling,
                   coll::Algorithm::kBinaryBlocks, coll::Algorithm::kHierarchical}) {
    AllReduceSgdOptions a;
    a.hp = hp(0.1, 8);
    a.workers = 6;
    a.steps = 300;
    a.algorithm = alg;
    a.group_size = 3;
    a.net = net();
    EXPECT_LT(allreduce_sgd(*w, a).final_loss(), kTarget) << coll::to_string(alg);
  }
}

TEST(Convergence, Async) {
  auto w = workload::generate_workload(quadratic());
  for (std::size_t n : {1u, 4u, 8u}) {
    AsyncOptions a;
    a.hp = hp(0.05, 8);
    a.async = {8, n};
    a.updates = 1500;
    a.net = net();
    EXPECT_LT(async_sgd(*w, a).final_loss(), kTarget) << n;
  }
}

TEST(Convergence, Easgd) {
  auto w = workload::generate_workload(quadratic());
  for (std::size_t tau : {1u, 4u, 16u}) {
    EasgdOptions e;
    e.hp = hp(0.05, 8);
    e.hp.rho = 1.0;
    e.hp.tau = tau;
    e.steps = 600;
    e.net = net();
    EXPECT_LT(easgd(*w, e).final_loss(), kTarget) << tau;
  }
}

TEST(Convergence, Gossip) {
  auto w = workload::generate_workload(quadratic());
  GossipOptions g;
  g.hp = hp(0.05, 8);
  g.steps = 400;
  g.net = net();
  EXPECT_LT(gossip_sgd(*w, g).final_loss(), kTarget);
}

TEST(Convergence, Lars) {
  auto spec = quadratic();
  spec.layers = 4;
  auto w = workload::generate_workload(spec);
  SingleNodeOptions o;
  o.hp = hp(1.0, 8);
  o.hp.trust = 0.01;
  o.steps = 2000;
  o.lars = true;
  o.lr.kind = LrSchedule::Kind::kPolynomial;
  EXPECT_LT(single_node_sgd(*w, o).final_loss(), kTarget);
}

TEST(Convergence, Dgc) {
  auto w = workload::generate_workload(quadratic());
  DgcOptions d;
  d.hp = hp(0.01, 8);
  d.steps = 1000;
  d.dgc.sparsity = 0.9;
  d.dgc.warmup = false;
  d.net = net();
  EXPECT_LT(dgc_sgd(*w, d).final_loss(), kTarget);
}

TEST(Convergence, ErrorFeedback) {
  auto w = workload::generate_workload(quadratic());
  for (auto scheme : {ErrorFeedbackOptions::Scheme::kGradientDrop,
                      ErrorFeedbackOptions::Scheme::kOneBit}) {
    ErrorFeedbackOptions e;
    e.hp = hp(0.05, 8);
    e.scheme = scheme;
    e.drop_percent = 75.0;
    e.steps = 1000;
    e.net = net();
    EXPECT_LT(error_feedback_sgd(*w, e).final_loss(), kTarget) << int(scheme);
  }
}

TEST(Convergence, MixedPrecision) {
  auto w = workload::generate_workload(quadratic());
  MixedPrecisionOptions m;
  m.hp = hp(0.05, 32);
  m.steps = 300;
  m.loss_scale.scale = 8.0;
  EXPECT_LT(mixed_precision_sgd(*w, m).final_loss(), kTarget);
}

TEST(Schedules, LinearScalingRate) {
  LrSchedule s;
  s.kind = LrSchedule::Kind::kLinearScaling;
  s.k = 8.0;
  s.warmup_epochs = 5.0;
  EXPECT_EQ(s.rate(0.1, 0.0, 0, 100), 0.1);
  EXPECT_EQ(s.rate(0.1, 5.0, 0, 100), 0.8);
}

TEST(Schedules, BatchGrowth) {
  BatchSchedule b;
  b.increasing = true;
  b.factor = 2.0;
  b.interval_epochs = 1.0;
  b.max_batch = 64;
  EXPECT_EQ(b.at(8, 0.5, 1024), 8u);
  EXPECT_EQ(b.at(8, 2.0, 1024), 32u);
  EXPECT_EQ(b.at(8, 9.0, 1024), 64u);
}

}  // namespace
}  // namespace gradsim::train

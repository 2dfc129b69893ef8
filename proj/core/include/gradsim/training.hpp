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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradsim/compress.hpp"
#include "gradsim/metrics.hpp"
#include "gradsim/optim.hpp"
#include "gradsim/precision.hpp"
#include "gradsim/schedule.hpp"
#include "gradsim/simnet.hpp"
#include "gradsim/workload.hpp"

// Training loops. Every runner owns its simulator, so a run is a pure
// function of (workload, options).

namespace gradsim::train {

struct LrSchedule {
  enum class Kind : std::uint8_t { kConstant, kLinearScaling, kPolynomial, kStepDecay };
  Kind kind = Kind::kConstant;
  double k = 1.0;              // linear scaling
  double warmup_epochs = 5.0;  // linear scaling
  double power = 2.0;          // polynomial
  std::uint64_t total_steps = 0;  // polynomial; 0 means the run length
  double decay = 0.5;             // step decay: factor per interval
  double interval_epochs = 1.0;   // step decay

  double rate(double base, double epoch, std::uint64_t step,
              std::uint64_t run_steps) const;
};

const char* to_string(LrSchedule::Kind k) noexcept;
LrSchedule::Kind lr_kind_from_string(const std::string& name);

struct BatchSchedule {
  bool increasing = false;
  double factor = 2.0;
  double interval_epochs = 1.0;
  std::size_t max_batch = 0;

  std::size_t at(std::size_t base, double epoch, std::size_t dataset) const;
};

struct NetworkOptions {
  sim::LatencyModel latency;
  sim::SimOptions sim;
  std::vector<sim::Failure> failures;
  double compute_time = 0.0;  // simulated seconds per gradient evaluation
};

struct RunResult {
  std::vector<double> weights;  // EASGD: center; gossip: node mean
  std::vector<metrics::Record> records;
  std::optional<sim::Trace> trace;
  sim::Time sim_time = 0.0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t messages = 0;
  std::uint64_t skipped = 0;
  std::uint64_t discarded = 0;  // late gradients dropped by N-of-M rounds
  std::vector<std::uint64_t> staleness;  // per applied gradient
  std::vector<sim::Time> round_times;

  double final_loss() const { return records.empty() ? 0.0 : records.back().loss; }
};

// Single machine. With micro_batches = N the step's batch is the union of
// N worker shards, accumulated shard by shard in worker order, which is
// exactly what a parameter server sees from N workers.
struct SingleNodeOptions {
  optim::Hyperparams hp;
  std::size_t steps = 50;
  std::size_t micro_batches = 1;
  LrSchedule lr;
  BatchSchedule batch;
  bool lars = false;  // apply LARS per workload layer instead of plain SGD
};

RunResult single_node_sgd(const workload::Workload& w, const SingleNodeOptions& opts);

// Parameter-server synchronous SGD. workers + backups machines compute each
// step; the first `workers` gradient arrivals are aggregated in worker-id
// order and the rest are discarded.
struct SyncOptions {
  optim::Hyperparams hp;
  std::size_t workers = 4;
  std::size_t backups = 0;
  std::size_t steps = 50;
  NetworkOptions net;
};

RunResult sync_sgd(const workload::Workload& w, const SyncOptions& opts);

// All-reduce synchronous SGD: every worker sums gradients with a collective
// and applies the identical update.
struct AllReduceSgdOptions {
  optim::Hyperparams hp;
  std::size_t workers = 4;
  std::size_t steps = 50;
  coll::Algorithm algorithm = coll::Algorithm::kRing;
  std::size_t group_size = 0;
  bool fault_tolerant = false;
  std::size_t replica_factor = 3;
  NetworkOptions net;
};

RunResult allreduce_sgd(const workload::Workload& w, const AllReduceSgdOptions& opts);

// n-softsync: the server applies one update per c = floor(lambda / n)
// gradient arrivals, each discounted by its staleness.
struct AsyncOptions {
  optim::Hyperparams hp;
  optim::AsyncConfig async;
  optim::StalenessPolicy policy = optim::StalenessPolicy::kInverseLinear;
  std::size_t updates = 100;
  NetworkOptions net;
};

RunResult async_sgd(const workload::Workload& w, const AsyncOptions& opts);

// EASGD: local SGD steps; every tau steps workers exchange with the center.
struct EasgdOptions {
  optim::Hyperparams hp;
  std::size_t workers = 8;
  std::size_t steps = 200;
  NetworkOptions net;
};

RunResult easgd(const workload::Workload& w, const EasgdOptions& opts);

// Local SGD followed by one gossip averaging round per step.
struct GossipOptions {
  optim::Hyperparams hp;
  std::size_t workers = 8;
  std::size_t steps = 200;
  std::uint64_t seed = 1;
  NetworkOptions net;
};

RunResult gossip_sgd(const workload::Workload& w, const GossipOptions& opts);

// Compressed data-parallel momentum SGD. Each worker runs DGC on its batch
// gradient and the sparse updates are exchanged with a ring all-gather.
// `dense` switches to the uncompressed momentum baseline.
struct DgcOptions {
  optim::Hyperparams hp;  // eta, batch_size
  std::size_t workers = 4;
  std::size_t steps = 100;
  compress::DgcConfig dgc;
  bool dense = false;
  std::size_t epoch_size = 0;  // examples per epoch; 0 means the dataset size
  NetworkOptions net;
};

RunResult dgc_sgd(const workload::Workload& w, const DgcOptions& opts);

// Error-feedback compressed SGD with gradient dropping or 1-bit
// quantization; traffic through a ring all-gather.
struct ErrorFeedbackOptions {
  enum class Scheme : std::uint8_t { kGradientDrop, kOneBit };
  optim::Hyperparams hp;
  Scheme scheme = Scheme::kGradientDrop;
  double drop_percent = 99.0;
  std::size_t workers = 4;
  std::size_t steps = 100;
  NetworkOptions net;
};

RunResult error_feedback_sgd(const workload::Workload& w,
                             const ErrorFeedbackOptions& opts);

// Single-node mixed precision: binary16 weights and gradients, binary32
// master copy, loss scaling with overflow skipping.
struct MixedPrecisionOptions {
  optim::Hyperparams hp;
  std::size_t steps = 100;
  precision::LossScaleState loss_scale;
  double clip_norm = 0.0;
};

RunResult mixed_precision_sgd(const workload::Workload& w,
                              const MixedPrecisionOptions& opts);

}  // namespace gradsim::train

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

#include "gradsim/presets.hpp"

#include "gradsim/error.hpp"

namespace gradsim::harness {
namespace {

ExperimentConfig base(const char* name, Pipeline pipeline) {
  ExperimentConfig c;
  c.name = name;
  c.pipeline = pipeline;
  c.workload.dim = 20;
  c.workload.size = 1024;
  c.workload.seed = 3;
  c.network.latency.startup = 0.01;
  c.network.latency.per_byte = 1e-9;
  c.network.compute_time = 0.1;
  return c;
}

// Noise-free quadratic: every example is the centre, gradients are exact.
ExperimentConfig exact_quadratic(const char* name, Pipeline pipeline) {
  auto c = base(name, pipeline);
  c.workload.noise = 0.0;
  c.optimizer.hp.eta = 0.05;
  c.optimizer.hp.batch_size = 8;
  return c;
}

ExperimentConfig sync_exact() {
  auto c = base("sync-exact", Pipeline::kSyncExact);
  c.optimizer.kind = OptimizerKind::kSync;
  c.optimizer.hp.eta = 0.05;
  c.optimizer.hp.batch_size = 8;
  c.optimizer.workers = 4;
  c.optimizer.steps = 50;
  return c;
}

ExperimentConfig single_node_baseline() {
  auto c = sync_exact();
  c.name = "single-node-baseline";
  c.pipeline = Pipeline::kTrain;
  c.optimizer.kind = OptimizerKind::kSgd;
  c.optimizer.micro_batches = 4;
  return c;
}

ExperimentConfig straggler(const char* name, const char* variant) {
  auto c = base(name, Pipeline::kStraggler);
  c.workload.size = 4096;
  c.network.latency.startup = 1.0;
  c.network.latency.per_byte = 0.0;
  c.network.latency.straggler = sim::Straggler::default_calibration();
  c.network.compute_time = 0.5;
  c.optimizer.kind = OptimizerKind::kSync;
  c.optimizer.hp.eta = 0.02;
  c.optimizer.hp.batch_size = 32;
  c.optimizer.workers = 12;
  c.optimizer.backups = 4;
  c.optimizer.steps = 50;
  c.sweep.seeds = 100;
  c.sweep.tolerance = 0.05;
  c.sweep.variant = variant;
  return c;
}

ExperimentConfig straggler_backup() { return straggler("straggler-backup", "backup"); }
ExperimentConfig straggler_barrier() { return straggler("straggler-barrier", "barrier"); }

ExperimentConfig softsync() {
  auto c = exact_quadratic("softsync", Pipeline::kSoftsync);
  c.optimizer.kind = OptimizerKind::kAsync;
  c.optimizer.workers = 8;
  c.optimizer.softsync_n = 8;
  c.optimizer.steps = 400;
  return c;
}

ExperimentConfig easgd() {
  auto c = exact_quadratic("easgd", Pipeline::kEasgd);
  c.optimizer.kind = OptimizerKind::kEasgd;
  c.optimizer.hp.rho = 1.0;
  c.optimizer.workers = 8;
  c.optimizer.steps = 400;
  c.sweep.taus = {1, 4, 16};
  c.sweep.tolerance = 1e-3;
  return c;
}

ExperimentConfig lars() {
  auto c = exact_quadratic("lars", Pipeline::kLars);
  c.workload.layers = 4;
  c.optimizer.kind = OptimizerKind::kLars;
  c.optimizer.hp.eta = 1.0;
  c.optimizer.hp.trust = 0.01;
  c.optimizer.steps = 2000;
  c.optimizer.lr.kind = train::LrSchedule::Kind::kPolynomial;
  c.sweep.target_loss = 1e-6;
  return c;
}

ExperimentConfig linear_scaling() {
  auto c = base("linear-scaling", Pipeline::kLinearScaling);
  c.optimizer.hp.eta = 0.1;
  c.optimizer.hp.batch_size = 32;
  c.optimizer.hp.warmup_epochs = 5.0;
  c.sweep.k_values = {2, 8, 32};
  return c;
}

ExperimentConfig batch_equivalence(const char* name, bool grow) {
  auto c = base(name, Pipeline::kBatchEquivalence);
  c.workload.dim = 1000;
  c.workload.size = 16384;
  c.workload.seed = 100;
  c.workload.stream = true;
  c.optimizer.hp.eta = 0.005;
  c.optimizer.hp.batch_size = 4;
  c.optimizer.steps = 5 * 16384 / 4;
  if (grow) {
    c.optimizer.batch.increasing = true;
    c.optimizer.batch.factor = 2.0;
    c.optimizer.batch.interval_epochs = 1.0;
    c.optimizer.batch.max_batch = 1024;
  } else {
    c.optimizer.lr.kind = train::LrSchedule::Kind::kStepDecay;
    c.optimizer.lr.decay = 0.5;
    c.optimizer.lr.interval_epochs = 1.0;
  }
  c.sweep.tolerance = 0.05;
  return c;
}

ExperimentConfig batch_increase() { return batch_equivalence("batch-increase", true); }
ExperimentConfig lr_decay() { return batch_equivalence("lr-decay", false); }

ExperimentConfig dgc_common(const char* name, Pipeline pipeline) {
  auto c = base(name, pipeline);
  c.optimizer.kind = OptimizerKind::kDgc;
  c.optimizer.workers = 4;
  c.compression.kind = CompressionKind::kDgc;
  c.compression.dgc.momentum = 0.9;
  return c;
}

ExperimentConfig dgc_sweep() {
  auto c = dgc_common("dgc-sweep", Pipeline::kDgcSweep);
  c.workload.dim = 1000;
  c.workload.layers = 4;
  c.optimizer.hp.eta = 1e-3;
  c.optimizer.hp.batch_size = 16;
  c.optimizer.steps = 50;
  c.sweep.sparsities = {0.0, 0.9, 0.99};
  return c;
}

ExperimentConfig dgc_equivalence() {
  auto c = dgc_common("dgc-equivalence", Pipeline::kDgcEquivalence);
  c.workload.dim = 100;
  c.optimizer.hp.eta = 0.01;
  c.optimizer.hp.batch_size = 8;
  c.optimizer.steps = 50;
  c.compression.dgc.sparsity = 0.0;
  c.compression.dgc.warmup = false;
  c.compression.dgc.mask_momentum = false;
  return c;
}

ExperimentConfig dgc_compression() {
  auto c = dgc_common("dgc-compression", Pipeline::kDgcCompression);
  c.workload.dim = 10000;
  c.workload.size = std::size_t{1} << 40;
  c.workload.seed = 5;
  c.workload.layers = 4;
  c.workload.stream = true;
  c.optimizer.hp.eta = 1e-3;
  c.optimizer.hp.batch_size = 16;
  c.optimizer.steps = 640;
  c.compression.dgc.sparsity = 0.99;
  c.compression.dgc.warmup = true;
  c.compression.dgc.warmup_start = 0.75;
  c.compression.dgc.warmup_epochs = 4;
  c.compression.epoch_size = 4096;
  c.sweep.tolerance = 0.10;
  c.sweep.min_ratio = 50.0;
  return c;
}

ExperimentConfig error_feedback() {
  auto c = base("error-feedback", Pipeline::kErrorFeedback);
  c.workload.dim = 256;
  c.optimizer.kind = OptimizerKind::kErrorFeedback;
  c.optimizer.hp.eta = 0.01;
  c.optimizer.hp.batch_size = 8;
  c.optimizer.steps = 1000;
  c.compression.kind = CompressionKind::kGradientDrop;
  c.compression.drop_percent = 99.0;
  return c;
}

ExperimentConfig mixed_precision() {
  auto c = base("mixed-precision", Pipeline::kMixedPrecision);
  c.optimizer.kind = OptimizerKind::kMixedPrecision;
  c.optimizer.hp.eta = 0.05;
  c.optimizer.hp.batch_size = 8;
  c.optimizer.steps = 200;
  c.precision.loss_scale.scale = 8.0;
  return c;
}

ExperimentConfig collectives() {
  auto c = base("collectives", Pipeline::kCollectives);
  c.network.trace = false;
  c.network.latency.per_byte = 0.0;
  c.network.drop_notify_delay = 0.05;
  c.collective.group_size = 4;
  return c;
}

ExperimentConfig step_counts() {
  auto c = base("step-counts", Pipeline::kStepCounts);
  c.network.latency.startup = 1.0;
  c.network.latency.per_byte = 0.0;
  c.sweep.p_values = {2, 4, 8, 16, 32};
  c.sweep.lengths = {1024};
  return c;
}

ExperimentConfig binary_blocks() {
  auto c = base("binary-blocks", Pipeline::kBinaryBlocks);
  c.sweep.p_values = {7};
  c.sweep.lengths = {64};
  return c;
}

ExperimentConfig ft_chaos() {
  auto c = base("ft-chaos", Pipeline::kFtChaos);
  c.network.latency.per_byte = 0.0;
  c.network.drop_notify_delay = 0.05;
  c.collective.fault_tolerant = true;
  c.collective.replica_factor = 3;
  c.sweep.seeds = 100;
  c.sweep.p_values = {6};
  c.sweep.lengths = {64};
  return c;
}

ExperimentConfig allreduce_ring() {
  auto c = base("allreduce-ring", Pipeline::kTrain);
  c.optimizer.kind = OptimizerKind::kAllReduce;
  c.optimizer.hp.eta = 0.05;
  c.optimizer.hp.batch_size = 8;
  c.optimizer.workers = 8;
  c.optimizer.steps = 50;
  return c;
}

ExperimentConfig allreduce_ft() {
  auto c = allreduce_ring();
  c.name = "allreduce-ft";
  c.optimizer.workers = 6;
  c.optimizer.steps = 20;
  c.collective.fault_tolerant = true;
  c.network.drop_notify_delay = 0.05;
  c.network.failures.push_back({4, 0.5, sim::FailureKind::kCrash, 10.0});
  return c;
}

ExperimentConfig gossip() {
  auto c = exact_quadratic("gossip", Pipeline::kTrain);
  c.optimizer.kind = OptimizerKind::kGossip;
  c.optimizer.workers = 8;
  c.optimizer.steps = 400;
  c.sweep.target_loss = 1e-6;
  return c;
}

ExperimentConfig logistic() {
  auto c = base("logistic", Pipeline::kTrain);
  c.workload.kind = workload::Kind::kLogistic;
  c.optimizer.hp.eta = 0.5;
  c.optimizer.hp.batch_size = 32;
  c.optimizer.steps = 300;
  return c;
}

ExperimentConfig mlp() {
  auto c = base("mlp", Pipeline::kTrain);
  c.workload.kind = workload::Kind::kMlp;
  c.workload.dim = 8;
  c.workload.hidden = 16;
  c.optimizer.kind = OptimizerKind::kSync;
  c.optimizer.hp.eta = 0.1;
  c.optimizer.hp.batch_size = 16;
  c.optimizer.steps = 200;
  return c;
}

ExperimentConfig determinism() {
  auto c = base("determinism", Pipeline::kDeterminism);
  return c;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"sync-exact", "4 synchronous workers vs the single-node union batch", sync_exact},
      {"single-node-baseline", "single node, 4 shard micro-batches per step",
       single_node_baseline},
      {"straggler-backup", "12-of-16 rounds under tail stragglers, 100 seeds", straggler_backup},
      {"straggler-barrier", "16-of-16 rounds under tail stragglers, 100 seeds",
       straggler_barrier},
      {"softsync", "n-softsync c values and the n=1 barrier", softsync},
      {"easgd", "elastic averaging, tau in {1, 4, 16}", easgd},
      {"lars", "layer-wise adaptive rates", lars},
      {"linear-scaling", "linear scaling warmup endpoints", linear_scaling},
      {"batch-increase", "batch doubling at a constant rate", batch_increase},
      {"lr-decay", "rate halving at a constant batch", lr_decay},
      {"dgc-sweep", "bytes sent vs sparsity", dgc_sweep},
      {"dgc-equivalence", "sparsity 0 vs dense momentum SGD", dgc_equivalence},
      {"dgc-compression", "compression ratio and loss at sparsity 0.99", dgc_compression},
      {"error-feedback", "residual conservation", error_feedback},
      {"mixed-precision", "half precision and loss scaling", mixed_precision},
      {"collectives", "all-reduce correctness sweep", collectives},
      {"step-counts", "all-reduce step counts at A=1, B=0", step_counts},
      {"binary-blocks", "binary blocks decomposition and idle audit", binary_blocks},
      {"ft-chaos", "tolerant all-reduce under replica crashes", ft_chaos},
      {"allreduce-ring", "ring all-reduce SGD", allreduce_ring},
      {"allreduce-ft", "tolerant all-reduce SGD with a crash", allreduce_ft},
      {"gossip", "gossip averaging SGD", gossip},
      {"logistic", "logistic regression SGD", logistic},
      {"mlp", "2-layer perceptron, synchronous", mlp},
      {"determinism", "rerun every preset and byte-compare", determinism},
  };
  return all;
}

ExperimentConfig preset_config(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) {
      auto c = p.make();
      c.description = p.description;
      return c;
    }
  }
  throw ConfigError("preset", "unknown preset '" + name + "'");
}

}  // namespace gradsim::harness

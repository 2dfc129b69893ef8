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
#include <string>
#include <vector>

#include "gradsim/compress.hpp"
#include "gradsim/optim.hpp"
#include "gradsim/precision.hpp"
#include "gradsim/schedule.hpp"
#include "gradsim/simnet.hpp"
#include "gradsim/training.hpp"
#include "gradsim/workload.hpp"

// Experiment configuration: a JSON tree with a versioned `schema` field.
// Parsing is strict; unknown keys and bad values raise ConfigError naming the
// dotted field path.

namespace gradsim::harness {

inline constexpr int kSchemaVersion = 1;

enum class Pipeline : std::uint8_t {
  kTrain,
  kSyncExact,
  kStraggler,
  kSoftsync,
  kEasgd,
  kLars,
  kLinearScaling,
  kBatchEquivalence,
  kDgcSweep,
  kDgcEquivalence,
  kDgcCompression,
  kErrorFeedback,
  kMixedPrecision,
  kCollectives,
  kStepCounts,
  kBinaryBlocks,
  kFtChaos,
  kDeterminism,
};

const char* to_string(Pipeline p) noexcept;
Pipeline pipeline_from_string(const std::string& name);

enum class OptimizerKind : std::uint8_t {
  kSgd,
  kSync,
  kAllReduce,
  kAsync,
  kEasgd,
  kGossip,
  kLars,
  kDgc,
  kErrorFeedback,
  kMixedPrecision,
};

const char* to_string(OptimizerKind k) noexcept;
OptimizerKind optimizer_from_string(const std::string& name);

enum class CompressionKind : std::uint8_t { kNone, kDgc, kGradientDrop, kOneBit };

const char* to_string(CompressionKind k) noexcept;
CompressionKind compression_from_string(const std::string& name);

struct NetworkConfig {
  sim::LatencyModel latency;
  double drop_notify_delay = 1.0;
  double compute_time = 0.0;
  std::vector<sim::Failure> failures;
  bool trace = true;

  train::NetworkOptions options() const;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  optim::Hyperparams hp;
  std::size_t workers = 4;
  std::size_t backups = 0;
  std::size_t steps = 50;
  std::size_t micro_batches = 1;
  std::size_t softsync_n = 1;
  optim::StalenessPolicy staleness = optim::StalenessPolicy::kInverseLinear;
  std::uint64_t gossip_seed = 1;
  train::LrSchedule lr;
  train::BatchSchedule batch;
};

struct CollectiveConfig {
  coll::Algorithm algorithm = coll::Algorithm::kRing;
  std::size_t group_size = 0;
  bool fault_tolerant = false;
  std::size_t replica_factor = 3;
  double heartbeat = 0.05;
};

struct CompressionConfig {
  CompressionKind kind = CompressionKind::kNone;
  compress::DgcConfig dgc;
  double drop_percent = 99.0;
  std::size_t epoch_size = 0;
};

struct PrecisionConfig {
  precision::LossScaleState loss_scale;
  double clip_norm = 0.0;
};

// Knobs for the checking pipelines; each pipeline reads the fields it needs.
struct SweepConfig {
  std::size_t seeds = 1;
  std::vector<std::size_t> p_values;
  std::vector<std::size_t> lengths;
  std::vector<std::string> algorithms;
  std::vector<double> sparsities;
  std::vector<std::size_t> taus;
  std::vector<double> k_values;
  std::vector<std::string> presets;
  double target_loss = 0.0;  // > 0: assert the final loss falls below it
  double tolerance = 0.0;
  double min_ratio = 0.0;  // dgc-compression: required wire compression
  std::string variant;     // straggler: backup|barrier; batch-equivalence: batch|lr
};

struct OutputConfig {
  std::string metrics;
  std::string trace;
  std::string summary;
};

struct ExperimentConfig {
  int schema = kSchemaVersion;
  std::string name;
  std::string description;
  Pipeline pipeline = Pipeline::kTrain;
  workload::WorkloadSpec workload;
  NetworkConfig network;
  OptimizerConfig optimizer;
  CollectiveConfig collective;
  CompressionConfig compression;
  PrecisionConfig precision;
  SweepConfig sweep;
  OutputConfig output;

  // Cross-field checks; throws ConfigError with the offending path.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Pretty-printed JSON accepted by parse_config.
std::string to_json(const ExperimentConfig& config);

}  // namespace gradsim::harness

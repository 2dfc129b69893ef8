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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gradsim/schedule.hpp"
#include "gradsim/simnet.hpp"
#include "gradsim/tensor.hpp"

namespace gradsim::coll {

inline constexpr std::uint32_t kCollectiveChannel = 1;

struct CollectiveOptions {
  tensor::ReduceOp op = tensor::ReduceOp::sum();
  std::uint32_t collective_id = 0;
  std::uint32_t channel = kCollectiveChannel;
  std::size_t group_size = 0;  // hierarchical only; 0 means one group
  sim::Time deadline = sim::kNever;
};

// Per participant, per phase message counts, read back for idle audits.
struct Activity {
  std::array<std::uint64_t, kPhaseCount> sent{};
  std::array<std::uint64_t, kPhaseCount> received{};

  std::uint64_t in_phase(Phase p) const noexcept {
    const auto i = static_cast<std::size_t>(p);
    return sent[i] + received[i];
  }
  std::uint64_t total() const noexcept;
};

struct CollectiveResult {
  std::vector<tensor::GradientVector> outputs;  // by participant
  sim::Time elapsed = 0.0;
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
  std::vector<Activity> activity;

  // Participants with no traffic at all in `phase`.
  std::size_t idle_in(Phase phase) const noexcept;
  // Participants that neither sent nor received anything.
  std::size_t fully_idle() const noexcept;
};

// Header carried in front of every chunk message.
struct ChunkHeader {
  std::uint32_t collective_id = 0;
  Phase phase = Phase::kScatterReduce;
  std::uint32_t step = 0;
  std::uint32_t tag = 0;
  Range range;
};

std::vector<std::uint8_t> encode_chunk(const ChunkHeader& header,
                                       std::span<const double> values,
                                       tensor::Precision precision);
ChunkHeader decode_chunk(std::span<const std::uint8_t> bytes,
                         tensor::GradientVector& values);

// Runs `schedule` with participant i placed on simulator node nodes[i]
// (identity when `nodes` is empty). Throws CollectiveFailed naming the dead
// nodes if any participant crashes before the collective completes.
CollectiveResult run_schedule(sim::Simulator& sim, const Schedule& schedule,
                              std::span<const tensor::GradientVector> inputs,
                              const CollectiveOptions& options = {},
                              std::span<const sim::NodeId> nodes = {});

CollectiveResult all_reduce(sim::Simulator& sim, Algorithm algorithm,
                            std::span<const tensor::GradientVector> inputs,
                            const CollectiveOptions& options = {},
                            std::span<const sim::NodeId> nodes = {});

CollectiveResult ring_all_reduce(sim::Simulator& sim,
                                 std::span<const tensor::GradientVector> inputs,
                                 const CollectiveOptions& options = {},
                                 std::span<const sim::NodeId> nodes = {});
CollectiveResult rhd_all_reduce(sim::Simulator& sim,
                                std::span<const tensor::GradientVector> inputs,
                                const CollectiveOptions& options = {},
                                std::span<const sim::NodeId> nodes = {});
CollectiveResult binary_blocks_all_reduce(
    sim::Simulator& sim, std::span<const tensor::GradientVector> inputs,
    const CollectiveOptions& options = {},
    std::span<const sim::NodeId> nodes = {});
CollectiveResult hierarchical_all_reduce(
    sim::Simulator& sim, std::span<const tensor::GradientVector> inputs,
    std::size_t group_size, const CollectiveOptions& options = {},
    std::span<const sim::NodeId> nodes = {});

struct ScatterResult {
  std::vector<Range> owned;                    // by participant
  std::vector<tensor::GradientVector> chunks;  // reduced owned chunk
  sim::Time elapsed = 0.0;
  std::uint64_t messages = 0;
};

ScatterResult ring_scatter_reduce(sim::Simulator& sim,
                                  std::span<const tensor::GradientVector> inputs,
                                  const CollectiveOptions& options = {},
                                  std::span<const sim::NodeId> nodes = {});
// Inverse half of the ring: every participant contributes its owned chunk
// (as produced by ring_scatter_reduce) and ends with the full vector.
CollectiveResult ring_all_gather(sim::Simulator& sim, const ScatterResult& scattered,
                                 std::size_t length,
                                 const CollectiveOptions& options = {},
                                 std::span<const sim::NodeId> nodes = {});

// Ring all-gather of opaque per-participant payloads (used for sparse
// gradients whose size differs per worker). Result[i][j] is participant j's
// blob as received by participant i.
struct BlobGatherResult {
  std::vector<std::vector<std::vector<std::uint8_t>>> blobs;
  sim::Time elapsed = 0.0;
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
};
BlobGatherResult all_gather_blobs(sim::Simulator& sim,
                                  std::span<const std::vector<std::uint8_t>> blobs,
                                  const CollectiveOptions& options = {},
                                  std::span<const sim::NodeId> nodes = {});

}  // namespace gradsim::coll

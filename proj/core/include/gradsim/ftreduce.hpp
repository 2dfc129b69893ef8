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

#include <cstdint>
#include <span>
#include <vector>

#include "gradsim/schedule.hpp"
#include "gradsim/simnet.hpp"
#include "gradsim/tensor.hpp"

// Fault-tolerant all-reduce. Every logical participant is a group of
// replicas kept consistent with a Raft-style leader/log; the leader runs the
// binary-blocks schedule and commits the result of each receive before it
// moves on, so a freshly elected leader picks up from the committed log.

namespace gradsim::ft {

inline constexpr std::uint32_t kRaftChannel = 2;
inline constexpr std::uint32_t kGroupChannel = 3;

enum class Role : std::uint8_t { kFollower, kCandidate, kLeader };
const char* to_string(Role r) noexcept;

// One log slot. No-op entries open a new leader's term.
struct ReductionEntry {
  std::uint64_t term = 0;
  bool noop = false;
  std::uint32_t collective_id = 0;
  std::uint32_t op_index = 0;
  coll::Phase phase = coll::Phase::kScatterReduce;
  std::uint32_t step = 0;
  std::uint32_t tag = 0;
  coll::Range range;
  std::vector<double> values;  // chunk after the reduction / store

  friend bool operator==(const ReductionEntry&, const ReductionEntry&) = default;
};

struct ForcedTimeout {
  sim::Time from_time = 0.0;  // applies to the first timer armed at/after this
  sim::Time delay = 0.0;
  std::vector<sim::NodeId> nodes;
};

struct FtOptions {
  std::size_t replica_factor = 3;
  sim::Time heartbeat = 0.05;
  double election_min = 5.0;   // timeout drawn from [min, max] x heartbeat
  double election_max = 10.0;
  // A leader that has not heard from a majority for this long, or a replica
  // that fails this many elections in a row, declares its group unavailable.
  sim::Time unavailable_timeout = 0.0;  // 0: 40 heartbeats
  std::size_t max_election_rounds = 20;
  // Backstop: no progress anywhere for this long ends the run.
  sim::Time stall_timeout = 0.0;  // 0: 200 heartbeats
  std::uint64_t seed = 0;
  tensor::ReduceOp op = tensor::ReduceOp::sum();
  std::uint32_t collective_id = 0;
  std::vector<ForcedTimeout> forced_timeouts;
  sim::Time deadline = sim::kNever;

  void validate() const;
};

struct ReplicaReport {
  sim::NodeId node = 0;
  std::size_t group = 0;
  bool alive = true;
  Role role = Role::kFollower;
  std::uint64_t term = 0;
  std::size_t commit_index = 0;
  std::vector<ReductionEntry> log;
};

struct FtResult {
  std::vector<tensor::GradientVector> outputs;  // by logical node
  sim::Time elapsed = 0.0;
  std::uint64_t data_messages = 0;     // inter-group chunk messages
  std::uint64_t control_messages = 0;  // inter-group redirects/announcements
  std::uint64_t raft_messages = 0;     // intra-group
  std::uint64_t elections = 0;         // leaders elected after the start
  std::uint64_t election_rounds = 0;   // candidacies started
  std::uint64_t split_votes = 0;       // candidacies that ended without a win
  std::vector<ReplicaReport> replicas;
  std::size_t safety_violations = 0;
};

constexpr std::size_t majority(std::size_t k) noexcept { return k / 2 + 1; }

// Simulator node of replica `r` of logical node `group`.
constexpr sim::NodeId replica_node(std::size_t group, std::size_t r,
                                   std::size_t k) noexcept {
  return static_cast<sim::NodeId>(group * k + r);
}

// The simulator must have inputs.size() * replica_factor nodes. Throws
// GroupUnavailable naming the first group that lost its majority.
FtResult tolerant_all_reduce(sim::Simulator& sim,
                             std::span<const tensor::GradientVector> inputs,
                             const FtOptions& options = {});

// Number of (group, replica pair, index) triples where two replicas disagree
// on an entry both consider committed.
std::size_t audit_logs(std::span<const ReplicaReport> replicas);

}  // namespace gradsim::ft
